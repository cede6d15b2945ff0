//! Layer specifications and the per-layer compute kernels.
//!
//! Tensors flow through layers one sample at a time as `[channels, h, w]`
//! maps or flat `[n]` vectors. Convolutions are direct (no im2col); the
//! stride-1 path accumulates whole contiguous rows so the compiler can
//! vectorize it.

use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Valid,
    Same,
}

/// Layer menu. `trainable` only exists on weight-bearing kinds.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: Padding,
        trainable: bool,
    },
    MaxPool {
        pool: (usize, usize),
        stride: usize,
    },
    Dense {
        inputs: usize,
        outputs: usize,
        trainable: bool,
    },
    Relu,
    Sigmoid,
    Flatten,
}

/// Shape of the data between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dims {
    Map { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dims::Map { c, h, w } => write!(f, "{}x{}x{}", c, h, w),
            Dims::Flat(n) => write!(f, "{}", n),
        }
    }
}

impl Dims {
    pub fn elements(&self) -> usize {
        match *self {
            Dims::Map { c, h, w } => c * h * w,
            Dims::Flat(n) => n,
        }
    }

    pub fn as_shape(&self) -> Vec<usize> {
        match *self {
            Dims::Map { c, h, w } => vec![c, h, w],
            Dims::Flat(n) => vec![n],
        }
    }
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::Flatten => "flatten",
        }
    }

    pub fn weight_bearing(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. })
    }

    pub fn is_trainable(&self) -> bool {
        match self {
            LayerSpec::Conv2d { trainable, .. } | LayerSpec::Dense { trainable, .. } => *trainable,
            _ => false,
        }
    }

    pub fn set_trainable(&mut self, value: bool) {
        match self {
            LayerSpec::Conv2d { trainable, .. } | LayerSpec::Dense { trainable, .. } => {
                *trainable = value
            }
            _ => {}
        }
    }

    /// Spec equality ignoring the trainable flag; used when checking that a
    /// transfer source and target agree on a network prefix.
    pub fn same_geometry(&self, other: &LayerSpec) -> bool {
        let mut a = self.clone();
        let mut b = other.clone();
        a.set_trainable(true);
        b.set_trainable(true);
        a == b
    }

    /// Shapes of (weights, bias), if the layer has parameters.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel: (kh, kw),
                ..
            } => Some((vec![out_channels, in_channels, kh, kw], vec![out_channels])),
            LayerSpec::Dense {
                inputs, outputs, ..
            } => Some((vec![inputs, outputs], vec![outputs])),
            _ => None,
        }
    }

    /// Number of inputs feeding one output unit; scales the init range.
    pub fn fan_in(&self) -> Option<usize> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                kernel: (kh, kw),
                ..
            } => Some(in_channels * kh * kw),
            LayerSpec::Dense { inputs, .. } => Some(inputs),
            _ => None,
        }
    }
}

/// Padding before/after one axis.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AxisPad {
    pub before: usize,
    /// Kept for geometry checks; kernels only need the leading pad.
    #[allow(dead_code)]
    pub total: usize,
}

pub(crate) fn axis_geometry(
    len: usize,
    k: usize,
    stride: usize,
    padding: Padding,
) -> Option<(usize, AxisPad)> {
    if k == 0 || stride == 0 {
        return None;
    }
    match padding {
        Padding::Valid => {
            if len < k {
                return None;
            }
            let out = (len - k) / stride + 1;
            Some((out, AxisPad { before: 0, total: 0 }))
        }
        Padding::Same => {
            let out = len.div_ceil(stride);
            let total = ((out - 1) * stride + k).saturating_sub(len);
            Some((out, AxisPad { before: total / 2, total }))
        }
    }
}

pub(crate) struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub in_hw: (usize, usize),
    pub out_hw: (usize, usize),
    pub pad_y: AxisPad,
    pub pad_x: AxisPad,
}

impl ConvGeometry {
    pub fn resolve(spec: &LayerSpec, dims: Dims) -> Option<ConvGeometry> {
        let (&in_channels, &out_channels, &(kh, kw), &stride, &padding) = match spec {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => (in_channels, out_channels, kernel, stride, padding),
            _ => return None,
        };
        let Dims::Map { c, h, w } = dims else {
            return None;
        };
        if c != in_channels {
            return None;
        }
        let (oh, pad_y) = axis_geometry(h, kh, stride, padding)?;
        let (ow, pad_x) = axis_geometry(w, kw, stride, padding)?;
        Some(ConvGeometry {
            in_channels,
            out_channels,
            kernel: (kh, kw),
            stride,
            in_hw: (h, w),
            out_hw: (oh, ow),
            pad_y,
            pad_x,
        })
    }
}

/// out[oc] += conv(in, w[oc]) over all input channels, plus bias.
pub(crate) fn conv2d_forward(g: &ConvGeometry, input: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let (h, win) = g.in_hw;
    let (oh, ow) = g.out_hw;
    let (kh, kw) = g.kernel;
    let mut out = vec![0.0; g.out_channels * oh * ow];
    for (oc, bias) in b.iter().enumerate() {
        out[oc * oh * ow..(oc + 1) * oh * ow].fill(*bias);
    }
    for oc in 0..g.out_channels {
        let out_plane = (oc * oh * ow)..((oc + 1) * oh * ow);
        for ic in 0..g.in_channels {
            let in_plane = &input[ic * h * win..(ic + 1) * h * win];
            let w_base = (oc * g.in_channels + ic) * kh * kw;
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = w[w_base + ky * kw + kx];
                    add_shifted_rows(
                        &mut out[out_plane.clone()],
                        in_plane,
                        g,
                        ky,
                        kx,
                        wv,
                    );
                }
            }
        }
    }
    out
}

/// One kernel tap: out[oy, ox] += wv * in[oy*s + ky - pad, ox*s + kx - pad]
/// over the in-bounds region. Stride 1 reduces to shifted-row axpy.
fn add_shifted_rows(out_plane: &mut [f64], in_plane: &[f64], g: &ConvGeometry, ky: usize, kx: usize, wv: f64) {
    let (h, win) = g.in_hw;
    let (oh, ow) = g.out_hw;
    let s = g.stride;
    for oy in 0..oh {
        let iy = (oy * s + ky) as isize - g.pad_y.before as isize;
        if iy < 0 || iy as usize >= h {
            continue;
        }
        let iy = iy as usize;
        let (ox_start, ox_end) = ox_range(win, ow, s, kx, g.pad_x.before);
        if ox_start >= ox_end {
            continue;
        }
        let out_row = &mut out_plane[oy * ow + ox_start..oy * ow + ox_end];
        if s == 1 {
            // ox_range guarantees ox_start + kx >= pad
            let base = iy * win + ox_start + kx - g.pad_x.before;
            let in_row = &in_plane[base..base + ox_end - ox_start];
            for (o, i) in out_row.iter_mut().zip(in_row) {
                *o += wv * *i;
            }
        } else {
            for (idx, o) in out_row.iter_mut().enumerate() {
                let ox = ox_start + idx;
                let ix = ox * s + kx - g.pad_x.before;
                *o += wv * in_plane[iy * win + ix];
            }
        }
    }
}

/// Valid output-column range for a kernel tap: ix = ox*s + kx - pad in [0, win).
fn ox_range(win: usize, ow: usize, s: usize, kx: usize, pad: usize) -> (usize, usize) {
    let start = if kx >= pad { 0 } else { (pad - kx).div_ceil(s) };
    // largest ox with ox*s + kx - pad <= win - 1
    let end = if win + pad > kx {
        (((win + pad - kx - 1) / s) + 1).min(ow)
    } else {
        0
    };
    (start.min(ow), end)
}

pub(crate) struct ConvBackward {
    pub d_weights: Vec<f64>,
    pub d_bias: Vec<f64>,
    pub d_input: Option<Vec<f64>>,
}

pub(crate) fn conv2d_backward(
    g: &ConvGeometry,
    input: &[f64],
    w: &[f64],
    d_out: &[f64],
    want_weight_grads: bool,
    want_input_grad: bool,
) -> ConvBackward {
    let (h, win) = g.in_hw;
    let (oh, ow) = g.out_hw;
    let (kh, kw) = g.kernel;
    let s = g.stride;
    let mut d_weights = vec![0.0; g.out_channels * g.in_channels * kh * kw];
    let mut d_bias = vec![0.0; g.out_channels];
    let mut d_input = if want_input_grad {
        Some(vec![0.0; g.in_channels * h * win])
    } else {
        None
    };
    for oc in 0..g.out_channels {
        let dout_plane = &d_out[oc * oh * ow..(oc + 1) * oh * ow];
        if want_weight_grads {
            d_bias[oc] = dout_plane.iter().sum();
        }
        for ic in 0..g.in_channels {
            let in_plane = &input[ic * h * win..(ic + 1) * h * win];
            let w_base = (oc * g.in_channels + ic) * kh * kw;
            for ky in 0..kh {
                for kx in 0..kw {
                    let mut dw = 0.0;
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - g.pad_y.before as isize;
                        if iy < 0 || iy as usize >= h {
                            continue;
                        }
                        let iy = iy as usize;
                        let (ox_start, ox_end) = ox_range(win, ow, s, kx, g.pad_x.before);
                        if ox_start >= ox_end {
                            continue;
                        }
                        let dout_row = &dout_plane[oy * ow + ox_start..oy * ow + ox_end];
                        if s == 1 {
                            let base = iy * win + ox_start + kx - g.pad_x.before;
                            if want_weight_grads {
                                let in_row = &in_plane[base..base + ox_end - ox_start];
                                dw += dout_row
                                    .iter()
                                    .zip(in_row)
                                    .map(|(d, i)| d * i)
                                    .sum::<f64>();
                            }
                            if let Some(di) = d_input.as_deref_mut() {
                                let wv = w[w_base + ky * kw + kx];
                                let di_row = &mut di[ic * h * win + base..][..ox_end - ox_start];
                                for (dst, d) in di_row.iter_mut().zip(dout_row) {
                                    *dst += wv * *d;
                                }
                            }
                        } else {
                            let wv = w[w_base + ky * kw + kx];
                            for (idx, d) in dout_row.iter().enumerate() {
                                let ox = ox_start + idx;
                                let ix = ox * s + kx - g.pad_x.before;
                                if want_weight_grads {
                                    dw += d * in_plane[iy * win + ix];
                                }
                                if let Some(di) = d_input.as_deref_mut() {
                                    di[ic * h * win + iy * win + ix] += wv * *d;
                                }
                            }
                        }
                    }
                    if want_weight_grads {
                        d_weights[w_base + ky * kw + kx] = dw;
                    }
                }
            }
        }
    }
    ConvBackward {
        d_weights,
        d_bias,
        d_input,
    }
}

pub(crate) struct PoolGeometry {
    pub channels: usize,
    pub in_hw: (usize, usize),
    pub out_hw: (usize, usize),
    pub pool: (usize, usize),
    pub stride: usize,
}

impl PoolGeometry {
    pub fn resolve(spec: &LayerSpec, dims: Dims) -> Option<PoolGeometry> {
        let (&(ph, pw), &stride) = match spec {
            LayerSpec::MaxPool { pool, stride } => (pool, stride),
            _ => return None,
        };
        let Dims::Map { c, h, w } = dims else {
            return None;
        };
        if ph == 0 || pw == 0 || stride == 0 || h < ph || w < pw {
            return None;
        }
        Some(PoolGeometry {
            channels: c,
            in_hw: (h, w),
            out_hw: ((h - ph) / stride + 1, (w - pw) / stride + 1),
            pool: (ph, pw),
            stride,
        })
    }
}

/// Max pooling; ties resolve to the first element in scan order, which keeps
/// the gradient routing deterministic.
pub(crate) fn maxpool_forward(g: &PoolGeometry, input: &[f64]) -> (Vec<f64>, Vec<u32>) {
    let (h, w) = g.in_hw;
    let (oh, ow) = g.out_hw;
    let (ph, pw) = g.pool;
    let mut out = vec![0.0; g.channels * oh * ow];
    let mut argmax = vec![0u32; g.channels * oh * ow];
    for c in 0..g.channels {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let y0 = oy * g.stride;
                let x0 = ox * g.stride;
                let mut best = f64::NEG_INFINITY;
                let mut best_at = 0usize;
                for dy in 0..ph {
                    for dx in 0..pw {
                        let at = (y0 + dy) * w + (x0 + dx);
                        if plane[at] > best {
                            best = plane[at];
                            best_at = at;
                        }
                    }
                }
                out[c * oh * ow + oy * ow + ox] = best;
                argmax[c * oh * ow + oy * ow + ox] = (c * h * w + best_at) as u32;
            }
        }
    }
    (out, argmax)
}

pub(crate) fn maxpool_backward(in_len: usize, argmax: &[u32], d_out: &[f64]) -> Vec<f64> {
    let mut d_in = vec![0.0; in_len];
    for (slot, d) in argmax.iter().zip(d_out) {
        d_in[*slot as usize] += *d;
    }
    d_in
}

/// y = x W + b with W stored `[inputs, outputs]` row-major.
pub(crate) fn dense_forward(x: &[f64], w: &[f64], b: &[f64], outputs: usize) -> Vec<f64> {
    let mut y = b.to_vec();
    for (i, xi) in x.iter().enumerate() {
        if *xi == 0.0 {
            continue;
        }
        let row = &w[i * outputs..(i + 1) * outputs];
        for (yo, wo) in y.iter_mut().zip(row) {
            *yo += *xi * *wo;
        }
    }
    y
}

pub(crate) struct DenseBackward {
    pub d_weights: Vec<f64>,
    pub d_bias: Vec<f64>,
    pub d_input: Option<Vec<f64>>,
}

pub(crate) fn dense_backward(
    x: &[f64],
    w: &[f64],
    d_out: &[f64],
    want_weight_grads: bool,
    want_input_grad: bool,
) -> DenseBackward {
    let outputs = d_out.len();
    let mut d_weights = vec![0.0; w.len()];
    let d_bias = if want_weight_grads {
        d_out.to_vec()
    } else {
        vec![0.0; outputs]
    };
    if want_weight_grads {
        for (i, xi) in x.iter().enumerate() {
            if *xi == 0.0 {
                continue;
            }
            let row = &mut d_weights[i * outputs..(i + 1) * outputs];
            for (dw, d) in row.iter_mut().zip(d_out) {
                *dw += *xi * *d;
            }
        }
    }
    let d_input = want_input_grad.then(|| {
        (0..x.len())
            .map(|i| {
                w[i * outputs..(i + 1) * outputs]
                    .iter()
                    .zip(d_out)
                    .map(|(wv, d)| wv * d)
                    .sum()
            })
            .collect()
    });
    DenseBackward {
        d_weights,
        d_bias,
        d_input,
    }
}

pub(crate) fn relu_forward(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

pub(crate) fn relu_backward(x: &[f64], d_out: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(d_out)
        .map(|(v, d)| if *v > 0.0 { *d } else { 0.0 })
        .collect()
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn sigmoid_forward(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| sigmoid(*v)).collect()
}

pub(crate) fn sigmoid_backward(y: &[f64], d_out: &[f64]) -> Vec<f64> {
    y.iter().zip(d_out).map(|(s, d)| s * (1.0 - s) * d).collect()
}

pub(crate) fn tensor_from(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::from_vec(shape, data).expect("kernel produced wrong element count")
}
