//! Signal layer: accelerometer traces in, spectrogram images out, plus the
//! obfuscation toolkit (shaped noise, sinusoid fingerprint, denoisers) and the
//! pedometer usability metric.

mod denoise;
mod noise;
mod pedometer;
mod spectrogram;
mod synth;
mod trace;

pub use denoise::{gaussian_filter, tv_denoise, Denoiser};
pub use noise::{inject_noise, NoiseKind, NoiseSpec};
pub use pedometer::{count_steps, pedometer_error};
pub use spectrogram::{
    normalize_image, spectrogram, spectrogram_raw, SpectrogramImage, StftConfig,
};
pub use synth::{synth_gait, SyntheticSubjectSpec, GRAVITY_MS2};
pub use trace::{ingest_csv, SensorTrace};

use thiserror::Error;

/// Errors from trace ingestion and feature extraction.
#[derive(Debug, Error)]
pub enum SignalError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("header is missing column(s) {missing:?}; need t,ax,ay,az")]
    MissingColumns { missing: Vec<String> },
    #[error("timestamps not strictly increasing at data row {row}: t={t} after t={prev}")]
    NonMonotoneTime { row: usize, t: f64, prev: f64 },
    #[error("no data rows in {path}")]
    EmptyFile { path: String },
    #[error("non-finite value at data row {row}, column {column}")]
    NonFinite { row: usize, column: &'static str },
    #[error("cannot parse {value:?} at data row {row}, column {column}")]
    BadNumber {
        row: usize,
        column: &'static str,
        value: String,
    },
    #[error("sample rate {0} must be positive and finite")]
    BadSampleRate(f64),
    #[error(
        "trace of {got} samples is shorter than one image: need {needed} \
         (window {window} + hop {hop} x {tail_frames} further frames)"
    )]
    TraceTooShort {
        got: usize,
        needed: usize,
        window: usize,
        hop: usize,
        tail_frames: usize,
    },
    #[error("invalid stft config: {0}")]
    BadStftConfig(String),
}
