//! Step counting over smoothed acceleration magnitude — the usability probe
//! for obfuscation noise: how badly does the noise break a pedometer?

use super::denoise::gaussian_filter;
use super::trace::SensorTrace;

/// Smoothing bandwidth in seconds; wide enough to suppress harmonics above
/// the cadence band so one stride yields one peak.
const SMOOTH_SIGMA_S: f64 = 0.1;
/// Two peaks closer than this are one step.
const MIN_PEAK_DISTANCE_S: f64 = 0.25;
/// Adaptive threshold: mean + this multiple of std.
const THRESHOLD_STD_FACTOR: f64 = 0.5;

/// Count steps: peaks of the Gaussian-smoothed magnitude that clear
/// mean + 0.5·std, at least 0.25 s apart.
pub fn count_steps(trace: &SensorTrace) -> usize {
    let sm = gaussian_filter(&trace.magnitude(), SMOOTH_SIGMA_S * trace.sample_rate);
    if sm.len() < 3 {
        return 0;
    }
    let n = sm.len() as f64;
    let mean = sm.iter().sum::<f64>() / n;
    let std = (sm.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let threshold = mean + THRESHOLD_STD_FACTOR * std;
    let min_gap = (MIN_PEAK_DISTANCE_S * trace.sample_rate).round() as usize;

    let mut steps = 0usize;
    let mut last_peak: Option<usize> = None;
    for i in 1..sm.len() - 1 {
        let is_peak = sm[i] > sm[i - 1] && sm[i] >= sm[i + 1] && sm[i] > threshold;
        if is_peak && last_peak.is_none_or(|p| i - p >= min_gap) {
            steps += 1;
            last_peak = Some(i);
        }
    }
    steps
}

/// Relative step-count error of a treated trace against its clean original.
/// Identical traces give 0; a clean trace with no steps at all gives 0 when
/// the treated one also has none, infinity otherwise.
pub fn pedometer_error(clean: &SensorTrace, treated: &SensorTrace) -> f64 {
    let c = count_steps(clean);
    let t = count_steps(treated);
    if c == 0 {
        return if t == 0 { 0.0 } else { f64::INFINITY };
    }
    (c.abs_diff(t)) as f64 / c as f64
}
