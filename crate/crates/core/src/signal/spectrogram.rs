//! Short-time Fourier features: per-axis log-magnitude maps stacked
//! vertically into fixed-size images, then standardized per image.

use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::trace::SensorTrace;
use super::SignalError;
use crate::tensor::Tensor;

/// STFT geometry. The defaults carve a trace into 33×42 images: 11 low
/// frequency bins per axis, three axes stacked, 42 frames at hop 8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub fft_len: usize,
    pub freq_bins_kept: usize,
    pub frames_kept: usize,
    /// Floor for log-magnitude pixels; |FFT| = 0 lands exactly here.
    pub log_floor: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_len: 32,
            hop: 8,
            fft_len: 32,
            freq_bins_kept: 11,
            frames_kept: 42,
            log_floor: -10.0,
        }
    }
}

impl StftConfig {
    /// Image height: three axes stacked.
    pub fn rows(&self) -> usize {
        3 * self.freq_bins_kept
    }

    pub fn cols(&self) -> usize {
        self.frames_kept
    }

    /// Samples consumed by one image.
    pub fn samples_per_image(&self) -> usize {
        self.window_len + self.hop * (self.frames_kept - 1)
    }

    /// Sample offset between consecutive images of the same trace.
    pub fn image_stride(&self) -> usize {
        self.hop * self.frames_kept
    }

    /// How many images a trace of `trace_len` samples yields.
    pub fn image_count(&self, trace_len: usize) -> usize {
        let span = self.samples_per_image();
        if trace_len < span {
            0
        } else {
            1 + (trace_len - span) / self.image_stride()
        }
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        let bad = |msg: String| Err(SignalError::BadStftConfig(msg));
        if self.hop == 0 {
            return bad("hop must be >= 1".into());
        }
        if !(self.hop <= self.window_len && self.window_len <= self.fft_len) {
            return bad(format!(
                "need hop <= window_len <= fft_len, got {} / {} / {}",
                self.hop, self.window_len, self.fft_len
            ));
        }
        if self.freq_bins_kept == 0 || self.freq_bins_kept > self.fft_len / 2 + 1 {
            return bad(format!(
                "freq_bins_kept {} outside 1..={}",
                self.freq_bins_kept,
                self.fft_len / 2 + 1
            ));
        }
        if self.frames_kept == 0 {
            return bad("frames_kept must be >= 1".into());
        }
        Ok(())
    }
}

/// One model-ready image: log-magnitude STFT blocks for x, y, z stacked top
/// to bottom, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramImage {
    pub subject_id: String,
    /// Which consecutive segment of the source trace this image covers.
    pub segment_index: usize,
    /// rows × cols matrix; rows = 3 × freq_bins_kept.
    pub pixels: Tensor,
}

impl SpectrogramImage {
    pub fn rows(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn cols(&self) -> usize {
        self.pixels.shape()[1]
    }

    /// Reshape to a single-channel network input [1, rows, cols].
    pub fn to_input(&self) -> Tensor {
        let shape = vec![1, self.rows(), self.cols()];
        self.pixels.clone().reshape(&shape).expect("rows*cols preserved")
    }

    /// Debug dump: one CSV row per image row, full-precision floats.
    pub fn write_csv(&self, path: &Path) -> Result<(), SignalError> {
        let (rows, cols) = (self.rows(), self.cols());
        let data = self.pixels.as_slice();
        let mut w = csv::Writer::from_path(path)?;
        for r in 0..rows {
            let record: Vec<String> =
                (0..cols).map(|c| data[r * cols + c].to_string()).collect();
            w.write_record(record)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Raw (pre-normalization) images: log-magnitude pixels straight off the FFT.
/// Useful where absolute levels matter (floor checks, shift covariance).
pub fn spectrogram_raw(
    trace: &SensorTrace,
    cfg: &StftConfig,
) -> Result<Vec<SpectrogramImage>, SignalError> {
    cfg.validate()?;
    let span = cfg.samples_per_image();
    if trace.len() < span {
        return Err(SignalError::TraceTooShort {
            got: trace.len(),
            needed: span,
            window: cfg.window_len,
            hop: cfg.hop,
            tail_frames: cfg.frames_kept - 1,
        });
    }
    let n_images = cfg.image_count(trace.len());
    let (rows, cols) = (cfg.rows(), cfg.cols());

    // Periodic Hann window.
    let window: Vec<f64> = (0..cfg.window_len)
        .map(|i| 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / cfg.window_len as f64).cos()))
        .collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.fft_len);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_len];

    let mut images = Vec::with_capacity(n_images);
    for n in 0..n_images {
        let start = n * cfg.image_stride();
        let mut pixels = vec![0.0f64; rows * cols];
        for axis in 0..3 {
            for frame in 0..cfg.frames_kept {
                let src = start + frame * cfg.hop;
                for i in 0..cfg.fft_len {
                    let v = if i < cfg.window_len {
                        trace.samples[src + i][axis] * window[i]
                    } else {
                        0.0
                    };
                    buf[i] = Complex::new(v, 0.0);
                }
                fft.process(&mut buf);
                for bin in 0..cfg.freq_bins_kept {
                    let mag = buf[bin].norm();
                    pixels[(axis * cfg.freq_bins_kept + bin) * cols + frame] =
                        mag.ln().max(cfg.log_floor);
                }
            }
        }
        images.push(SpectrogramImage {
            subject_id: trace.subject_id.clone(),
            segment_index: n,
            pixels: Tensor::from_vec(&[rows, cols], pixels).expect("sized above"),
        });
    }
    Ok(images)
}

/// Standardize one image in place to mean 0, std 1 (all-zero if the pixels
/// are constant).
pub fn normalize_image(img: &mut SpectrogramImage) {
    let data = img.pixels.as_mut_slice();
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-12 {
        data.fill(0.0);
    } else {
        for v in data.iter_mut() {
            *v = (*v - mean) / std;
        }
    }
}

/// Model-ready images: raw STFT maps standardized per image.
pub fn spectrogram(
    trace: &SensorTrace,
    cfg: &StftConfig,
) -> Result<Vec<SpectrogramImage>, SignalError> {
    let mut images = spectrogram_raw(trace, cfg)?;
    for img in &mut images {
        normalize_image(img);
    }
    Ok(images)
}
