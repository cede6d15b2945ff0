//! The Siamese wrapper: one shared trunk evaluated by both branches, plus the
//! optional probability head, with checkpoint round-tripping.

use std::path::Path;

use super::losses::PairHead;
use super::MetricError;
use crate::nn::{
    load_checkpoint, save_checkpoint, ArchSpec, ForwardCache, Layer, LayerSpec, Model,
    NnError,
};
use crate::tensor::Tensor;

/// Both branches evaluate this one trunk — there is no second parameter copy
/// to drift. The head, when present, scores |φ₁−φ₂|.
#[derive(Debug, Clone)]
pub struct SiameseModel {
    pub trunk: Model,
    pub head: Option<PairHead>,
}

/// Offset mixed into the trunk seed for head init, so trunk and head never
/// share a draw stream.
const HEAD_SEED_SALT: u64 = 0x68656164; // "head"

impl SiameseModel {
    pub fn new(trunk: Model, head: Option<PairHead>) -> Self {
        Self { trunk, head }
    }

    /// Build from an architecture; `with_head` adds a freshly initialized
    /// probability head sized to the trunk's embedding.
    pub fn from_arch(arch: &ArchSpec, seed: u64, with_head: bool) -> Result<Self, NnError> {
        let trunk = arch.build(seed)?;
        let head = with_head.then(|| {
            let dim = trunk.output_dims().expect("validated arch composes").elements();
            PairHead::init(dim, seed ^ HEAD_SEED_SALT)
        });
        Ok(Self { trunk, head })
    }

    pub fn embedding_dim(&self) -> usize {
        self.trunk.output_dims().map_or(0, |d| d.elements())
    }

    /// Embed one image, keeping the cache for backprop.
    pub fn embed(&self, image: &Tensor) -> Result<(Tensor, ForwardCache), NnError> {
        self.trunk.forward(image)
    }

    /// Embed without keeping the cache.
    pub fn embed_only(&self, image: &Tensor) -> Result<Tensor, NnError> {
        Ok(self.trunk.forward(image)?.0)
    }

    /// Embedding distance between two images.
    pub fn distance(&self, a: &Tensor, b: &Tensor) -> Result<f64, MetricError> {
        let pa = self.embed_only(a)?;
        let pb = self.embed_only(b)?;
        super::distance(pa.as_slice(), pb.as_slice())
    }

    /// Similarity probability for two embeddings; errors when no head exists.
    pub fn pair_probability(&self, phi1: &[f64], phi2: &[f64]) -> Result<f64, MetricError> {
        let head = self.head.as_ref().ok_or(MetricError::HeadMissing)?;
        super::losses::pair_probability(head, phi1, phi2)
    }

    /// Serialize trunk and head into one checkpoint. The head rides along as
    /// a trailing dense(dim→1) + sigmoid layer pair, which `load_bytes`
    /// recognizes and splits back out.
    pub fn save_bytes(&self) -> Vec<u8> {
        match &self.head {
            None => save_checkpoint(&self.trunk),
            Some(head) => {
                let dim = head.dim();
                let mut assembled = self.trunk.clone();
                assembled.layers.push(Layer {
                    spec: LayerSpec::Dense {
                        inputs: dim,
                        outputs: 1,
                        trainable: true,
                    },
                    weights: Some(
                        Tensor::from_vec(&[dim, 1], head.weights.clone())
                            .expect("head weight length is its dim"),
                    ),
                    bias: Some(
                        Tensor::from_vec(&[1], vec![head.bias]).expect("one bias"),
                    ),
                });
                assembled.layers.push(Layer {
                    spec: LayerSpec::Sigmoid,
                    weights: None,
                    bias: None,
                });
                save_checkpoint(&assembled)
            }
        }
    }

    /// Deserialize, splitting a trailing dense(·→1) + sigmoid pair back into
    /// the probability head.
    pub fn load_bytes(bytes: &[u8]) -> Result<Self, MetricError> {
        let mut model = load_checkpoint(bytes)?;
        let n = model.layers.len();
        let head_present = n >= 2
            && matches!(model.layers[n - 1].spec, LayerSpec::Sigmoid)
            && matches!(model.layers[n - 2].spec, LayerSpec::Dense { outputs: 1, .. });
        if !head_present {
            return Ok(Self { trunk: model, head: None });
        }
        model.layers.pop(); // sigmoid
        let dense = model.layers.pop().expect("checked above");
        let weights = dense.weights.expect("checkpoint loader fills weight layers");
        let bias = dense.bias.expect("checkpoint loader fills weight layers");
        let head = PairHead {
            weights: weights.into_vec(),
            bias: bias.as_slice()[0],
        };
        let trunk_dim = model
            .output_dims()
            .ok_or_else(|| MetricError::BadCheckpoint("trunk layers do not compose".into()))?;
        if trunk_dim.elements() != head.dim() {
            return Err(MetricError::BadCheckpoint(format!(
                "head expects {} inputs but the trunk emits {}",
                head.dim(),
                trunk_dim.elements()
            )));
        }
        Ok(Self { trunk: model, head: Some(head) })
    }

    pub fn save_file(&self, path: &Path) -> Result<(), MetricError> {
        std::fs::write(path, self.save_bytes())
            .map_err(|e| MetricError::Checkpoint(e.into()))
    }

    pub fn load_file(path: &Path) -> Result<Self, MetricError> {
        let bytes = std::fs::read(path).map_err(|e| MetricError::Checkpoint(e.into()))?;
        Self::load_bytes(&bytes)
    }
}

/// Feature transfer: copy the source trunk's first k weight layers into a
/// fresh target and freeze them; adaptation layers and the head start fresh.
pub fn transfer_init(
    target_arch: &ArchSpec,
    source: &SiameseModel,
    k: usize,
    seed: u64,
    with_head: bool,
) -> Result<SiameseModel, NnError> {
    let trunk = crate::nn::transfer_init(target_arch, &source.trunk, k, seed)?;
    let head = with_head.then(|| {
        let dim = trunk
            .output_dims()
            .map(|d| d.elements())
            .expect("transfer target composes");
        PairHead::init(dim, seed ^ HEAD_SEED_SALT)
    });
    Ok(SiameseModel { trunk, head })
}
