//! Gait-based authentication engine.
//!
//! An accelerometer trace is turned into log-magnitude spectrogram images,
//! a shared-weight convolutional trunk maps each image to an embedding, and
//! authentication decisions are made from embedding distances: single-pair
//! thresholding for evaluation, sequential probability-ratio fusion for
//! sessions. The crate also covers the surrounding machinery: pair
//! enumeration and reservoir subsampling, obfuscation noise and denoising
//! defenses, transfer initialization, and replay-attack simulation.

pub mod fusion;
pub mod metric;
pub mod nn;
pub mod pairing;
pub mod pipeline;
pub mod signal;
pub mod tensor;
pub mod threat;

pub use tensor::Tensor;
