//! Decision fusion: spatially fused distances fed through a sequential
//! probability-ratio test, plus the feedback counter that schedules
//! retraining after repeated rejections.

mod feedback;
mod simulate;
mod sprt;

pub use feedback::{FeedbackCounter, RetrainSignal};
pub use simulate::{DistanceStream, StreamKind};
pub use sprt::{
    likelihood_ratio, normal_cdf, run_sprt, similarity_probability, spatial_distance, DenomMode,
    SprtConfig, SprtDecision, SprtOutcome, SprtState,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("no enrolled samples to fuse against")]
    EmptyEnrollment,
    #[error("bad sequential-test config: {0}")]
    BadConfig(String),
}
