//! Architecture specs, materialized models, autodiff, and SGD.

use super::layer::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, maxpool_backward,
    maxpool_forward, relu_backward, relu_forward, sigmoid_backward, sigmoid_forward, tensor_from,
    ConvGeometry, Dims, LayerSpec, Padding, PoolGeometry,
};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::hash_map::DefaultHasher;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("layer {index} ({kind}) cannot follow layer {prev_index} ({prev_kind}): input {dims} is incompatible")]
    Composition {
        index: usize,
        kind: &'static str,
        prev_index: isize,
        prev_kind: String,
        dims: String,
    },
    #[error("input shape {actual:?} does not match the expected {expected:?}")]
    InputShape {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("forward cache does not belong to this model")]
    CacheMismatch,
    #[error("cannot freeze {requested} weight layers; the model has {available}")]
    FreezeOutOfRange { requested: usize, available: usize },
    #[error("gradients do not line up with the model's layers")]
    GradientMismatch,
    #[error("non-finite gradient in layer {layer} ({kind})")]
    NonFiniteGradient { layer: usize, kind: &'static str },
    #[error("transfer prefix mismatch at layer {index}: source {source_layer}, target {target_layer}")]
    PrefixMismatch {
        index: usize,
        source_layer: String,
        target_layer: String,
    },
    #[error("empty architecture")]
    EmptyArch,
}

/// Nominal per-block parameter budget an architecture is designed against.
#[derive(Debug, Clone, Serialize)]
pub struct DesignTarget {
    pub label: String,
    /// Ordinals (0-based) of the weight-bearing layers the block covers.
    pub weight_layers: Vec<usize>,
    pub nominal: f64,
}

/// An architecture: input dims plus an ordered layer list.
#[derive(Debug, Clone)]
pub struct ArchSpec {
    pub name: String,
    pub input: Dims,
    pub layers: Vec<LayerSpec>,
    pub targets: Vec<DesignTarget>,
    pub nominal_total: Option<f64>,
}

impl ArchSpec {
    pub fn new(name: &str, input: Dims, layers: Vec<LayerSpec>) -> Self {
        ArchSpec {
            name: name.to_string(),
            input,
            layers,
            targets: Vec::new(),
            nominal_total: None,
        }
    }

    /// Chain every layer's output shape; errors name the offending pair.
    pub fn validate(&self) -> Result<Vec<Dims>, NnError> {
        if self.layers.is_empty() {
            return Err(NnError::EmptyArch);
        }
        let mut dims = self.input;
        let mut chain = Vec::with_capacity(self.layers.len());
        for (index, spec) in self.layers.iter().enumerate() {
            dims = layer_out_dims(spec, dims).ok_or_else(|| NnError::Composition {
                index,
                kind: spec.kind_name(),
                prev_index: index as isize - 1,
                prev_kind: if index == 0 {
                    "input".to_string()
                } else {
                    self.layers[index - 1].kind_name().to_string()
                },
                dims: dims.to_string(),
            })?;
            chain.push(dims);
        }
        Ok(chain)
    }

    /// Materialize weights with fan-in-scaled uniform init from `seed`.
    pub fn build(&self, seed: u64) -> Result<Model, NnError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(self.layers.len());
        for spec in &self.layers {
            let (weights, bias) = match spec.param_shapes() {
                Some((w_shape, b_shape)) => {
                    let fan_in = spec.fan_in().unwrap_or(1).max(1);
                    let bound = (6.0 / fan_in as f64).sqrt();
                    let w: Vec<f64> = (0..w_shape.iter().product::<usize>())
                        .map(|_| rng.gen_range(-bound..bound))
                        .collect();
                    (
                        Some(tensor_from(&w_shape, w)),
                        Some(Tensor::zeros(&b_shape)),
                    )
                }
                None => (None, None),
            };
            layers.push(Layer {
                spec: spec.clone(),
                weights,
                bias,
            });
        }
        Ok(Model {
            layers,
            input: self.input,
            rng_seed: seed,
        })
    }

    /// Per-layer parameter derivation with deltas against the design budget.
    pub fn params_report(&self) -> Result<ParamsReport, NnError> {
        let chain = self.validate()?;
        let mut layers = Vec::new();
        let mut total = 0usize;
        let mut dims = self.input;
        let mut weight_ordinal = 0usize;
        for (index, spec) in self.layers.iter().enumerate() {
            let out = chain[index];
            if let Some((w_shape, b_shape)) = spec.param_shapes() {
                let weights: usize = w_shape.iter().product();
                let bias: usize = b_shape.iter().product();
                total += weights + bias;
                layers.push(ParamsLayer {
                    layer_index: index,
                    weight_ordinal,
                    kind: spec.kind_name().to_string(),
                    input: dims.to_string(),
                    output: out.to_string(),
                    derivation: derivation_string(spec, &w_shape),
                    weights,
                    bias,
                    subtotal: weights + bias,
                });
                weight_ordinal += 1;
            }
            dims = out;
        }
        let blocks = self
            .targets
            .iter()
            .map(|t| {
                let actual: usize = layers
                    .iter()
                    .filter(|l| t.weight_layers.contains(&l.weight_ordinal))
                    .map(|l| l.subtotal)
                    .sum();
                ParamsBlock {
                    label: t.label.clone(),
                    actual,
                    nominal: t.nominal,
                    delta_pct: delta_pct(actual as f64, t.nominal),
                }
            })
            .collect();
        Ok(ParamsReport {
            arch: self.name.clone(),
            layers,
            blocks,
            total,
            nominal_total: self.nominal_total,
            total_delta_pct: self.nominal_total.map(|n| delta_pct(total as f64, n)),
        })
    }
}

fn delta_pct(actual: f64, nominal: f64) -> f64 {
    100.0 * (actual - nominal) / nominal
}

fn derivation_string(spec: &LayerSpec, w_shape: &[usize]) -> String {
    match spec {
        LayerSpec::Conv2d { .. } => format!(
            "{}*{}*{}*{} + {}",
            w_shape[0], w_shape[1], w_shape[2], w_shape[3], w_shape[0]
        ),
        LayerSpec::Dense { .. } => format!("{}*{} + {}", w_shape[0], w_shape[1], w_shape[1]),
        _ => String::new(),
    }
}

fn layer_out_dims(spec: &LayerSpec, dims: Dims) -> Option<Dims> {
    match spec {
        LayerSpec::Conv2d { .. } => {
            let g = ConvGeometry::resolve(spec, dims)?;
            Some(Dims::Map {
                c: g.out_channels,
                h: g.out_hw.0,
                w: g.out_hw.1,
            })
        }
        LayerSpec::MaxPool { .. } => {
            let g = PoolGeometry::resolve(spec, dims)?;
            Some(Dims::Map {
                c: g.channels,
                h: g.out_hw.0,
                w: g.out_hw.1,
            })
        }
        LayerSpec::Dense { inputs, outputs, .. } => match dims {
            Dims::Flat(n) if n == *inputs => Some(Dims::Flat(*outputs)),
            _ => None,
        },
        LayerSpec::Relu | LayerSpec::Sigmoid => Some(dims),
        LayerSpec::Flatten => Some(Dims::Flat(dims.elements())),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamsLayer {
    pub layer_index: usize,
    pub weight_ordinal: usize,
    pub kind: String,
    pub input: String,
    pub output: String,
    pub derivation: String,
    pub weights: usize,
    pub bias: usize,
    pub subtotal: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamsBlock {
    pub label: String,
    pub actual: usize,
    pub nominal: f64,
    pub delta_pct: f64,
}

/// Parameter accounting for an architecture, with per-block deltas against
/// the nominal design budget where one is declared.
#[derive(Debug, Clone, Serialize)]
pub struct ParamsReport {
    pub arch: String,
    pub layers: Vec<ParamsLayer>,
    pub blocks: Vec<ParamsBlock>,
    pub total: usize,
    pub nominal_total: Option<f64>,
    pub total_delta_pct: Option<f64>,
}

impl ParamsReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "architecture: {}", self.arch);
        let _ = writeln!(s, "{:<3} {:<8} {:>10} -> {:>10} {:>22} {:>9}", "#", "kind", "in", "out", "derivation", "params");
        for l in &self.layers {
            let _ = writeln!(
                s,
                "{:<3} {:<8} {:>10} -> {:>10} {:>22} {:>9}",
                l.layer_index, l.kind, l.input, l.output, l.derivation, l.subtotal
            );
        }
        if !self.blocks.is_empty() {
            let _ = writeln!(s, "block subtotals vs nominal design budget:");
            for b in &self.blocks {
                let _ = writeln!(
                    s,
                    "  {:<10} {:>9} vs {:>9.0} ({:+.2}%)",
                    b.label, b.actual, b.nominal, b.delta_pct
                );
            }
        }
        match (self.nominal_total, self.total_delta_pct) {
            (Some(n), Some(d)) => {
                let _ = writeln!(s, "total: {} vs nominal {:.0} ({:+.2}%)", self.total, n, d);
            }
            _ => {
                let _ = writeln!(s, "total: {}", self.total);
            }
        }
        s
    }
}

/// One materialized layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub weights: Option<Tensor>,
    pub bias: Option<Tensor>,
}

/// A materialized network. Parameters are `f64` throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub layers: Vec<Layer>,
    pub input: Dims,
    /// Seed used at initialization; informational, not persisted.
    pub rng_seed: u64,
}

enum CacheEntry {
    Conv { input: Tensor },
    MaxPool { in_len: usize, argmax: Vec<u32> },
    Dense { input: Tensor },
    Relu { input: Tensor },
    Sigmoid { output: Tensor },
    Flatten { in_shape: Vec<usize> },
}

/// Intermediate activations retained by `forward` for `backward`.
pub struct ForwardCache {
    entries: Vec<CacheEntry>,
    fingerprint: u64,
}

/// Per-layer gradient tensors; `None` for layers without parameters.
#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub weights: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<Option<LayerGrad>>,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Gradients {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| {
                    l.weights.as_ref().map(|w| LayerGrad {
                        weights: Tensor::zeros(w.shape()),
                        bias: Tensor::zeros(l.bias.as_ref().unwrap().shape()),
                    })
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
                a.weights.add_assign(&b.weights);
                a.bias.add_assign(&b.bias);
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.layers.iter_mut().flatten() {
            g.weights.scale(factor);
            g.bias.scale(factor);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flatten()
            .map(|g| g.weights.max_abs().max(g.bias.max_abs()))
            .fold(0.0, f64::max)
    }
}

impl Model {
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for l in &self.layers {
            l.spec.hash(&mut h);
        }
        self.input.as_shape().hash(&mut h);
        h.finish()
    }

    /// Total number of weight and bias elements.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                l.weights.as_ref().map_or(0, Tensor::len) + l.bias.as_ref().map_or(0, Tensor::len)
            })
            .sum()
    }

    pub fn weight_layer_count(&self) -> usize {
        self.layers.iter().filter(|l| l.spec.weight_bearing()).count()
    }

    /// Output dims for a single sample, if the layer chain composes.
    pub fn output_dims(&self) -> Option<Dims> {
        let mut dims = self.input;
        for l in &self.layers {
            dims = layer_out_dims(&l.spec, dims)?;
        }
        Some(dims)
    }

    /// Freeze the first `freeze_first` weight-bearing layers and mark the
    /// rest trainable.
    pub fn set_trainable(&mut self, freeze_first: usize) -> Result<(), NnError> {
        let available = self.weight_layer_count();
        if freeze_first > available {
            return Err(NnError::FreezeOutOfRange {
                requested: freeze_first,
                available,
            });
        }
        let mut seen = 0usize;
        for layer in &mut self.layers {
            if layer.spec.weight_bearing() {
                layer.spec.set_trainable(seen >= freeze_first);
                seen += 1;
            }
        }
        Ok(())
    }

    /// Run the network on one `[c, h, w]` sample.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ForwardCache), NnError> {
        if x.shape() != self.input.as_shape().as_slice() {
            return Err(NnError::InputShape {
                expected: self.input.as_shape(),
                actual: x.shape().to_vec(),
            });
        }
        let mut dims = self.input;
        let mut data = x.clone();
        let mut entries = Vec::with_capacity(self.layers.len());
        for (index, layer) in self.layers.iter().enumerate() {
            let out_dims = layer_out_dims(&layer.spec, dims).ok_or_else(|| NnError::Composition {
                index,
                kind: layer.spec.kind_name(),
                prev_index: index as isize - 1,
                prev_kind: String::from("(runtime)"),
                dims: dims.to_string(),
            })?;
            let out_shape = out_dims.as_shape();
            data = match &layer.spec {
                LayerSpec::Conv2d { .. } => {
                    let g = ConvGeometry::resolve(&layer.spec, dims).unwrap();
                    let out = conv2d_forward(
                        &g,
                        data.as_slice(),
                        layer.weights.as_ref().unwrap().as_slice(),
                        layer.bias.as_ref().unwrap().as_slice(),
                    );
                    entries.push(CacheEntry::Conv { input: data });
                    tensor_from(&out_shape, out)
                }
                LayerSpec::MaxPool { .. } => {
                    let g = PoolGeometry::resolve(&layer.spec, dims).unwrap();
                    let (out, argmax) = maxpool_forward(&g, data.as_slice());
                    entries.push(CacheEntry::MaxPool {
                        in_len: data.len(),
                        argmax,
                    });
                    tensor_from(&out_shape, out)
                }
                LayerSpec::Dense { outputs, .. } => {
                    let out = dense_forward(
                        data.as_slice(),
                        layer.weights.as_ref().unwrap().as_slice(),
                        layer.bias.as_ref().unwrap().as_slice(),
                        *outputs,
                    );
                    entries.push(CacheEntry::Dense { input: data });
                    tensor_from(&out_shape, out)
                }
                LayerSpec::Relu => {
                    let out = relu_forward(data.as_slice());
                    entries.push(CacheEntry::Relu { input: data });
                    tensor_from(&out_shape, out)
                }
                LayerSpec::Sigmoid => {
                    let out = tensor_from(&out_shape, sigmoid_forward(data.as_slice()));
                    entries.push(CacheEntry::Sigmoid {
                        output: out.clone(),
                    });
                    out
                }
                LayerSpec::Flatten => {
                    let in_shape = data.shape().to_vec();
                    let out = data.reshape(&out_shape).unwrap();
                    entries.push(CacheEntry::Flatten { in_shape });
                    out
                }
            };
            dims = out_dims;
        }
        Ok((
            data,
            ForwardCache {
                entries,
                fingerprint: self.fingerprint(),
            },
        ))
    }

    /// Backpropagate `d_out` through the cached forward pass.
    ///
    /// Frozen weight layers get zero gradients while gradient flow continues
    /// through them; once no trainable layer remains below, propagation stops
    /// early unless the caller asked for the input gradient.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_out: &Tensor,
        want_input_grad: bool,
    ) -> Result<(Gradients, Option<Tensor>), NnError> {
        if cache.fingerprint != self.fingerprint() || cache.entries.len() != self.layers.len() {
            return Err(NnError::CacheMismatch);
        }
        let lowest_trainable = self
            .layers
            .iter()
            .position(|l| l.spec.is_trainable());
        let mut grads = Gradients::zeros_like(self);
        let mut grad = Some(d_out.clone());
        for index in (0..self.layers.len()).rev() {
            let need_below = want_input_grad
                || matches!(lowest_trainable, Some(t) if t < index);
            let layer = &self.layers[index];
            let g_in = grad.take().expect("gradient chain intact");
            let next = match (&layer.spec, &cache.entries[index]) {
                (LayerSpec::Conv2d { .. }, CacheEntry::Conv { input }) => {
                    let dims = dims_of(input);
                    let geom = ConvGeometry::resolve(&layer.spec, dims).unwrap();
                    let got = conv2d_backward(
                        &geom,
                        input.as_slice(),
                        layer.weights.as_ref().unwrap().as_slice(),
                        g_in.as_slice(),
                        layer.spec.is_trainable(),
                        need_below,
                    );
                    if layer.spec.is_trainable() {
                        let slot = grads.layers[index].as_mut().unwrap();
                        slot.weights = tensor_from(
                            layer.weights.as_ref().unwrap().shape(),
                            got.d_weights,
                        );
                        slot.bias =
                            tensor_from(layer.bias.as_ref().unwrap().shape(), got.d_bias);
                    }
                    got.d_input
                        .map(|d| tensor_from(input.shape(), d))
                }
                (LayerSpec::MaxPool { .. }, CacheEntry::MaxPool { in_len, argmax }) => {
                    if need_below {
                        let d = maxpool_backward(*in_len, argmax, g_in.as_slice());
                        Some(tensor_from(&[*in_len], d))
                    } else {
                        None
                    }
                }
                (LayerSpec::Dense { .. }, CacheEntry::Dense { input }) => {
                    let got = dense_backward(
                        input.as_slice(),
                        layer.weights.as_ref().unwrap().as_slice(),
                        g_in.as_slice(),
                        layer.spec.is_trainable(),
                        need_below,
                    );
                    if layer.spec.is_trainable() {
                        let slot = grads.layers[index].as_mut().unwrap();
                        slot.weights = tensor_from(
                            layer.weights.as_ref().unwrap().shape(),
                            got.d_weights,
                        );
                        slot.bias =
                            tensor_from(layer.bias.as_ref().unwrap().shape(), got.d_bias);
                    }
                    got.d_input.map(|d| tensor_from(input.shape(), d))
                }
                (LayerSpec::Relu, CacheEntry::Relu { input }) => need_below.then(|| {
                    tensor_from(
                        input.shape(),
                        relu_backward(input.as_slice(), g_in.as_slice()),
                    )
                }),
                (LayerSpec::Sigmoid, CacheEntry::Sigmoid { output }) => need_below.then(|| {
                    tensor_from(
                        output.shape(),
                        sigmoid_backward(output.as_slice(), g_in.as_slice()),
                    )
                }),
                (LayerSpec::Flatten, CacheEntry::Flatten { in_shape }) => {
                    need_below.then(|| g_in.reshape(in_shape).unwrap())
                }
                _ => return Err(NnError::CacheMismatch),
            };
            if index == 0 {
                return Ok((grads, if want_input_grad { next } else { None }));
            }
            match next {
                Some(n) => grad = Some(n),
                None => return Ok((grads, None)),
            }
        }
        Ok((grads, None))
    }

    /// One plain SGD step over every trainable layer: `p -= lr * g`.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) -> Result<(), NnError> {
        if grads.layers.len() != self.layers.len() {
            return Err(NnError::GradientMismatch);
        }
        for (index, (layer, grad)) in self.layers.iter_mut().zip(&grads.layers).enumerate() {
            if !layer.spec.is_trainable() {
                continue;
            }
            let Some(g) = grad else {
                return Err(NnError::GradientMismatch);
            };
            if !g.weights.all_finite() || !g.bias.all_finite() {
                return Err(NnError::NonFiniteGradient {
                    layer: index,
                    kind: layer.spec.kind_name(),
                });
            }
            layer
                .weights
                .as_mut()
                .unwrap()
                .add_scaled(&g.weights, -lr);
            layer.bias.as_mut().unwrap().add_scaled(&g.bias, -lr);
        }
        Ok(())
    }
}

fn dims_of(t: &Tensor) -> Dims {
    match t.shape() {
        [c, h, w] => Dims::Map {
            c: *c,
            h: *h,
            w: *w,
        },
        [n] => Dims::Flat(*n),
        other => Dims::Flat(other.iter().product()),
    }
}

/// Copy the first `k` weight-bearing layers of `source` into a fresh build of
/// `target_arch`, freeze them, and initialize the rest from `seed`.
///
/// The two architectures must agree on the layer prefix up to and including
/// the k-th weight-bearing layer (trainable flags aside).
pub fn transfer_init(
    target_arch: &ArchSpec,
    source: &Model,
    k: usize,
    seed: u64,
) -> Result<Model, NnError> {
    let prefix_len = prefix_len_for_k_weight_layers(&target_arch.layers, k).ok_or(
        NnError::FreezeOutOfRange {
            requested: k,
            available: target_arch
                .layers
                .iter()
                .filter(|l| l.weight_bearing())
                .count(),
        },
    )?;
    if source.layers.len() < prefix_len {
        return Err(NnError::PrefixMismatch {
            index: source.layers.len(),
            source_layer: "(missing)".into(),
            target_layer: target_arch.layers[source.layers.len()].kind_name().into(),
        });
    }
    for i in 0..prefix_len {
        if !source.layers[i].spec.same_geometry(&target_arch.layers[i]) {
            return Err(NnError::PrefixMismatch {
                index: i,
                source_layer: format!("{:?}", source.layers[i].spec),
                target_layer: format!("{:?}", target_arch.layers[i]),
            });
        }
    }
    let mut model = target_arch.build(seed)?;
    for i in 0..prefix_len {
        model.layers[i].weights = source.layers[i].weights.clone();
        model.layers[i].bias = source.layers[i].bias.clone();
    }
    model.set_trainable(k)?;
    Ok(model)
}

fn prefix_len_for_k_weight_layers(layers: &[LayerSpec], k: usize) -> Option<usize> {
    if k == 0 {
        return Some(0);
    }
    let mut seen = 0usize;
    for (i, l) in layers.iter().enumerate() {
        if l.weight_bearing() {
            seen += 1;
            if seen == k {
                return Some(i + 1);
            }
        }
    }
    None
}

fn conv(in_channels: usize, out_channels: usize, k: usize) -> LayerSpec {
    LayerSpec::Conv2d {
        in_channels,
        out_channels,
        kernel: (k, k),
        stride: 1,
        padding: Padding::Same,
        trainable: true,
    }
}

fn pool2() -> LayerSpec {
    LayerSpec::MaxPool {
        pool: (2, 2),
        stride: 2,
    }
}

/// Four weight layers: three 5x5 conv blocks (32, 64, 32 channels, each with
/// 2x2 pooling) and a 128-unit embedding layer. For 1x33x42 inputs the
/// flatten width is 32*4*5 = 640.
pub fn lenet4() -> ArchSpec {
    let mut arch = ArchSpec::new(
        "lenet4",
        Dims::Map { c: 1, h: 33, w: 42 },
        vec![
            conv(1, 32, 5),
            LayerSpec::Relu,
            pool2(),
            conv(32, 64, 5),
            LayerSpec::Relu,
            pool2(),
            conv(64, 32, 5),
            LayerSpec::Relu,
            pool2(),
            LayerSpec::Flatten,
            LayerSpec::Dense {
                inputs: 640,
                outputs: 128,
                trainable: true,
            },
            LayerSpec::Relu,
        ],
    );
    arch.targets = vec![
        DesignTarget {
            label: "conv1".into(),
            weight_layers: vec![0],
            nominal: 960.0,
        },
        DesignTarget {
            label: "conv2".into(),
            weight_layers: vec![1],
            nominal: 51_500.0,
        },
        DesignTarget {
            label: "conv3".into(),
            weight_layers: vec![2],
            nominal: 51_400.0,
        },
        DesignTarget {
            label: "dense".into(),
            weight_layers: vec![3],
            nominal: 82_500.0,
        },
    ];
    arch.nominal_total = Some(186_360.0);
    arch
}

/// Eight weight layers: VGG-style 3x3 stacks (64-64, 128-128, 128-128-128,
/// pooling after each stack) and a 128-unit embedding layer.
pub fn vgg8() -> ArchSpec {
    let mut arch = ArchSpec::new(
        "vgg8",
        Dims::Map { c: 1, h: 33, w: 42 },
        vec![
            conv(1, 64, 3),
            LayerSpec::Relu,
            conv(64, 64, 3),
            LayerSpec::Relu,
            pool2(),
            conv(64, 128, 3),
            LayerSpec::Relu,
            conv(128, 128, 3),
            LayerSpec::Relu,
            pool2(),
            conv(128, 128, 3),
            LayerSpec::Relu,
            conv(128, 128, 3),
            LayerSpec::Relu,
            conv(128, 128, 3),
            LayerSpec::Relu,
            pool2(),
            LayerSpec::Flatten,
            LayerSpec::Dense {
                inputs: 2560,
                outputs: 128,
                trainable: true,
            },
            LayerSpec::Relu,
        ],
    );
    arch.targets = vec![
        DesignTarget {
            label: "block1".into(),
            weight_layers: vec![0, 1],
            nominal: 39_200.0,
        },
        DesignTarget {
            label: "block2".into(),
            weight_layers: vec![2, 3],
            nominal: 222_500.0,
        },
        DesignTarget {
            label: "block3".into(),
            weight_layers: vec![4, 5, 6],
            nominal: 444_300.0,
        },
        DesignTarget {
            label: "dense".into(),
            weight_layers: vec![7],
            nominal: 327_800.0,
        },
    ];
    arch.nominal_total = Some(1_033_800.0);
    arch
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lenet4_composes_and_counts_params() {
        let arch = lenet4();
        let chain = arch.validate().unwrap();
        assert_eq!(*chain.last().unwrap(), Dims::Flat(128));
        let model = arch.build(7).unwrap();
        // 832 + 51264 + 51232 + 82048
        assert_eq!(model.param_count(), 185_376);
        let report = arch.params_report().unwrap();
        assert_eq!(report.total, 185_376);
        assert!(report.total_delta_pct.unwrap().abs() < 10.0);
    }

    #[test]
    fn vgg8_composes_and_counts_params() {
        let arch = vgg8();
        arch.validate().unwrap();
        let report = arch.params_report().unwrap();
        assert_eq!(report.total, 1_029_568);
        assert!(report.total_delta_pct.unwrap().abs() < 10.0);
    }

    #[test]
    fn composition_error_names_the_layer_pair() {
        let arch = ArchSpec::new(
            "bad",
            Dims::Map { c: 1, h: 8, w: 8 },
            vec![
                conv(1, 4, 3),
                LayerSpec::Dense {
                    inputs: 10,
                    outputs: 2,
                    trainable: true,
                },
            ],
        );
        let err = arch.validate().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("layer 1 (dense)"), "{msg}");
        assert!(msg.contains("layer 0 (conv2d)"), "{msg}");
    }

    #[test]
    fn init_is_deterministic_and_fan_in_scaled() {
        let arch = lenet4();
        let a = arch.build(11).unwrap();
        let b = arch.build(11).unwrap();
        let c = arch.build(12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        // conv1 fan-in 25 -> bound sqrt(6/25) ~ 0.49
        let w = a.layers[0].weights.as_ref().unwrap();
        let bound = (6.0f64 / 25.0).sqrt();
        assert!(w.max_abs() <= bound);
        assert!(w.max_abs() > bound * 0.5);
        // biases start at zero
        assert_eq!(a.layers[0].bias.as_ref().unwrap().max_abs(), 0.0);
    }

    #[test]
    fn all_zero_input_with_zero_bias_gives_zero_embedding() {
        let arch = lenet4();
        let model = arch.build(3).unwrap();
        let x = Tensor::zeros(&[1, 33, 42]);
        let (out, _) = model.forward(&x).unwrap();
        assert_eq!(out.max_abs(), 0.0);
    }

    #[test]
    fn freezing_counts_weight_layers_only() {
        let arch = lenet4();
        let mut model = arch.build(5).unwrap();
        model.set_trainable(3).unwrap();
        let flags: Vec<bool> = model
            .layers
            .iter()
            .filter(|l| l.spec.weight_bearing())
            .map(|l| l.spec.is_trainable())
            .collect();
        assert_eq!(flags, vec![false, false, false, true]);
        assert!(model.set_trainable(5).is_err());
        model.set_trainable(0).unwrap();
        assert!(model
            .layers
            .iter()
            .filter(|l| l.spec.weight_bearing())
            .all(|l| l.spec.is_trainable()));
    }

    #[test]
    fn frozen_layers_get_zero_grads_and_flow_continues() {
        let arch = ArchSpec::new(
            "tiny",
            Dims::Map { c: 1, h: 4, w: 4 },
            vec![
                conv(1, 2, 3),
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: 32,
                    outputs: 3,
                    trainable: true,
                },
            ],
        );
        let mut model = arch.build(1).unwrap();
        model.set_trainable(1).unwrap();
        let x = Tensor::from_vec(&[1, 4, 4], (0..16).map(|i| f64::from(i) * 0.1).collect()).unwrap();
        let (out, cache) = model.forward(&x).unwrap();
        let d_out = Tensor::from_vec(&[3], vec![1.0, -0.5, 0.25]).unwrap();
        let (grads, d_in) = model.backward(&cache, &d_out, true).unwrap();
        assert_eq!(grads.layers[0].as_ref().unwrap().weights.max_abs(), 0.0);
        assert!(grads.layers[3].as_ref().unwrap().weights.max_abs() > 0.0);
        assert!(d_in.is_some());
        assert_eq!(out.shape(), &[3]);
    }

    #[test]
    fn fully_frozen_model_has_all_zero_grads() {
        let arch = lenet4();
        let mut model = arch.build(2).unwrap();
        model.set_trainable(4).unwrap();
        let x = Tensor::from_vec(&[1, 33, 42], vec![0.1; 33 * 42]).unwrap();
        let (out, cache) = model.forward(&x).unwrap();
        let d_out = Tensor::from_vec(&[128], vec![1.0; 128]).unwrap();
        let (grads, _) = model.backward(&cache, &d_out, false).unwrap();
        assert_eq!(grads.max_abs(), 0.0);
        assert_eq!(out.shape(), &[128]);
    }

    #[test]
    fn sgd_step_rejects_non_finite_gradients() {
        let arch = lenet4();
        let mut model = arch.build(2).unwrap();
        let mut grads = Gradients::zeros_like(&model);
        grads.layers[0].as_mut().unwrap().weights.as_mut_slice()[0] = f64::NAN;
        let err = model.sgd_step(&grads, 0.01).unwrap_err();
        assert!(matches!(err, NnError::NonFiniteGradient { layer: 0, .. }));
    }

    #[test]
    fn cache_from_other_model_is_rejected() {
        let arch = lenet4();
        let model_a = arch.build(1).unwrap();
        let model_b = vgg8().build(1).unwrap();
        let x = Tensor::zeros(&[1, 33, 42]);
        let (_, cache) = model_a.forward(&x).unwrap();
        let d = Tensor::zeros(&[128]);
        assert!(matches!(
            model_b.backward(&cache, &d, false),
            Err(NnError::CacheMismatch)
        ));
    }

    #[test]
    fn transfer_init_copies_prefix_and_freezes() {
        let arch = lenet4();
        let source = arch.build(10).unwrap();
        let model = transfer_init(&arch, &source, 3, 99).unwrap();
        for i in [0usize, 3, 6] {
            assert_eq!(
                model.layers[i].weights.as_ref().unwrap(),
                source.layers[i].weights.as_ref().unwrap()
            );
            assert!(!model.layers[i].spec.is_trainable());
        }
        // dense layer freshly initialized, trainable
        assert_ne!(
            model.layers[10].weights.as_ref().unwrap(),
            source.layers[10].weights.as_ref().unwrap()
        );
        assert!(model.layers[10].spec.is_trainable());
    }

    #[test]
    fn transfer_init_rejects_mismatched_prefix() {
        let source = lenet4().build(10).unwrap();
        let err = transfer_init(&vgg8(), &source, 1, 0).unwrap_err();
        assert!(matches!(err, NnError::PrefixMismatch { index: 0, .. }));
    }
}
