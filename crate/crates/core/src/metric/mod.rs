//! Siamese metric learning: embedding distance, the pair losses and their
//! exact gradients, the training loop over a balanced reservoir, feature
//! transfer, and threshold-sweep evaluation.

mod eval;
mod losses;
mod siamese;
mod train;

pub use eval::{evaluate, threshold_sweep, EvalReport, RocPoint};
pub use losses::{
    contrastive_loss, cross_entropy_pair_loss, joint_loss, pair_loss_grad, pair_probability,
    LossConfig, LossMode, PairGrad, PairHead, PROB_CLAMP,
};
pub use siamese::{transfer_init, SiameseModel};
pub use train::{train, EpochStat, TrainConfig};

use thiserror::Error;

use crate::nn::{CheckpointError, NnError};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("embedding lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("loss mode needs the probability head, but the model has none")]
    HeadMissing,
    #[error("probability head expects {expected}-dim embeddings, got {actual}")]
    HeadDim { expected: usize, actual: usize },
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("reservoir is empty; nothing to train on")]
    EmptyBuffer,
    #[error("batch size {batch} exceeds resident pair count {available}")]
    BatchTooLarge { batch: usize, available: usize },
    #[error("evaluation needs both labels: got {positives} positive / {negatives} negative pairs")]
    EvalDegenerate { positives: usize, negatives: usize },
    #[error("checkpoint does not contain a usable model: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Euclidean distance between two embeddings.
pub fn distance(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(crate::tensor::l2_distance(a, b))
}
