//! Obfuscation noise: additive noise shaped by a causal moving-window std of
//! the signal itself, plus a low-frequency sinusoidal device fingerprint.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::synth::CADENCE_BAND;
use super::trace::SensorTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    Laplacian,
    Uniform,
    Sinusoid,
}

/// What to add and how strong. Additive kinds scale to the signal's own
/// moving-window std; the sinusoid scales to the overall per-axis std.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Causal moving window, in samples, over which the signal std is taken.
    pub moving_window: usize,
    /// Per-sample noise std = std_scale × windowed signal std.
    pub std_scale: f64,
    /// Fingerprint frequency in Hz (sinusoid kind only).
    pub sinusoid_freq: f64,
    /// Fingerprint amplitude = ratio × overall per-axis std.
    pub sinusoid_amp_ratio: f64,
    pub seed: u64,
}

impl NoiseSpec {
    fn additive(kind: NoiseKind, std_scale: f64, sample_rate: f64, seed: u64) -> Self {
        Self {
            kind,
            moving_window: one_second_window(sample_rate),
            std_scale,
            sinusoid_freq: 0.0,
            sinusoid_amp_ratio: 0.0,
            seed,
        }
    }

    pub fn gaussian(std_scale: f64, sample_rate: f64, seed: u64) -> Self {
        Self::additive(NoiseKind::Gaussian, std_scale, sample_rate, seed)
    }

    pub fn laplacian(std_scale: f64, sample_rate: f64, seed: u64) -> Self {
        Self::additive(NoiseKind::Laplacian, std_scale, sample_rate, seed)
    }

    pub fn uniform(std_scale: f64, sample_rate: f64, seed: u64) -> Self {
        Self::additive(NoiseKind::Uniform, std_scale, sample_rate, seed)
    }

    /// A per-device fingerprint: secret frequency inside the cadence band so
    /// it hides among gait energy, small amplitude, seeded secret phase.
    pub fn sinusoid_fingerprint(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            kind: NoiseKind::Sinusoid,
            moving_window: 1,
            std_scale: 0.0,
            sinusoid_freq: rng.gen_range(CADENCE_BAND.0..CADENCE_BAND.1),
            sinusoid_amp_ratio: 0.1,
            seed,
        }
    }
}

/// One second of samples, at least one.
pub fn one_second_window(sample_rate: f64) -> usize {
    (sample_rate.round() as usize).max(1)
}

/// Causal moving-window population std. Indices before the first full window
/// reuse the std of the first full window (warm-up); traces shorter than the
/// window use the whole trace everywhere.
fn moving_std(xs: &[f64], window: usize) -> Vec<f64> {
    let n = xs.len();
    let w = window.clamp(1, n.max(1));
    let mut s1 = vec![0.0f64; n + 1];
    let mut s2 = vec![0.0f64; n + 1];
    for (i, &x) in xs.iter().enumerate() {
        s1[i + 1] = s1[i] + x;
        s2[i + 1] = s2[i] + x * x;
    }
    let std_over = |lo: usize, hi: usize| -> f64 {
        let m = (hi - lo) as f64;
        let mean = (s1[hi] - s1[lo]) / m;
        let var = ((s2[hi] - s2[lo]) / m - mean * mean).max(0.0);
        var.sqrt()
    };
    let warmup = std_over(0, w);
    (0..n)
        .map(|i| if i + 1 < w { warmup } else { std_over(i + 1 - w, i + 1) })
        .collect()
}

fn overall_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Add obfuscation noise. Length, sample rate, and subject label are
/// preserved; the draw stream is fixed per (seed, length), independent of the
/// signal values.
pub fn inject_noise(trace: &SensorTrace, spec: &NoiseSpec) -> SensorTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut samples = trace.samples.clone();
    match spec.kind {
        NoiseKind::Sinusoid => {
            let amps: Vec<f64> = (0..3)
                .map(|a| spec.sinusoid_amp_ratio * overall_std(&trace.axis(a)))
                .collect();
            let phases: Vec<f64> =
                (0..3).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
            let omega = std::f64::consts::TAU * spec.sinusoid_freq;
            for (i, s) in samples.iter_mut().enumerate() {
                let t = i as f64 / trace.sample_rate;
                for axis in 0..3 {
                    s[axis] += amps[axis] * (omega * t + phases[axis]).sin();
                }
            }
        }
        kind => {
            let stds: Vec<Vec<f64>> =
                (0..3).map(|a| moving_std(&trace.axis(a), spec.moving_window)).collect();
            for (i, s) in samples.iter_mut().enumerate() {
                for axis in 0..3 {
                    let sigma = spec.std_scale * stds[axis][i];
                    // Always one draw per (sample, axis) so the stream layout
                    // does not depend on the data.
                    let unit: f64 = match kind {
                        NoiseKind::Gaussian => rng.sample(StandardNormal),
                        NoiseKind::Laplacian => {
                            // Inverse-CDF with b chosen so the variance is 1.
                            let u: f64 = rng.gen::<f64>() - 0.5;
                            -u.signum() * (1.0 - 2.0 * u.abs()).ln()
                                / std::f64::consts::SQRT_2
                        }
                        NoiseKind::Uniform => {
                            // Width ±√3 gives unit variance.
                            3.0f64.sqrt() * (2.0 * rng.gen::<f64>() - 1.0)
                        }
                        NoiseKind::Sinusoid => unreachable!(),
                    };
                    s[axis] += sigma * unit;
                }
            }
        }
    }
    SensorTrace::new(trace.sample_rate, samples, trace.subject_id.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn white_trace(n: usize, seed: u64) -> SensorTrace {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..n)
            .map(|_| [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)])
            .collect();
        SensorTrace::new(50.0, samples, "white")
    }

    fn added(a: &SensorTrace, b: &SensorTrace, axis: usize) -> Vec<f64> {
        a.samples.iter().zip(&b.samples).map(|(x, y)| y[axis] - x[axis]).collect()
    }

    #[test]
    fn zero_scale_is_identity() {
        let tr = white_trace(256, 1);
        for spec in [
            NoiseSpec::gaussian(0.0, 50.0, 9),
            NoiseSpec::laplacian(0.0, 50.0, 9),
            NoiseSpec::uniform(0.0, 50.0, 9),
            NoiseSpec {
                sinusoid_amp_ratio: 0.0,
                ..NoiseSpec::sinusoid_fingerprint(9)
            },
        ] {
            let out = inject_noise(&tr, &spec);
            assert_eq!(out.samples, tr.samples);
            assert_eq!(out.sample_rate, tr.sample_rate);
        }
    }

    #[test]
    fn zero_signal_gets_zero_noise() {
        let tr = SensorTrace::new(50.0, vec![[0.0; 3]; 300], "flat");
        let out = inject_noise(&tr, &NoiseSpec::gaussian(1.0, 50.0, 4));
        assert_eq!(out.samples, tr.samples);
    }

    #[test]
    fn unit_scale_tracks_signal_std() {
        // White N(0,1) input: windowed std ≈ 1, so the added noise should have
        // std ≈ std_scale for every distribution shape.
        let tr = white_trace(10_000, 2);
        for (spec, name) in [
            (NoiseSpec::gaussian(1.0, 50.0, 5), "gaussian"),
            (NoiseSpec::laplacian(1.0, 50.0, 6), "laplacian"),
            (NoiseSpec::uniform(1.0, 50.0, 7), "uniform"),
        ] {
            let out = inject_noise(&tr, &spec);
            for axis in 0..3 {
                let d = added(&tr, &out, axis);
                let std = overall_std(&d);
                assert!(
                    (0.9..=1.1).contains(&std),
                    "{name} axis {axis}: added std {std}"
                );
            }
        }
    }

    #[test]
    fn injection_is_deterministic_and_preserves_shape() {
        let tr = white_trace(500, 3);
        let spec = NoiseSpec::laplacian(0.7, 50.0, 21);
        let a = inject_noise(&tr, &spec);
        let b = inject_noise(&tr, &spec);
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.len(), tr.len());
        assert_eq!(a.sample_rate, tr.sample_rate);
        assert_eq!(a.subject_id, tr.subject_id);
    }

    #[test]
    fn fingerprint_is_a_scaled_sinusoid() {
        let tr = white_trace(4000, 8);
        let spec = NoiseSpec::sinusoid_fingerprint(31);
        assert!(spec.sinusoid_freq >= 1.4 && spec.sinusoid_freq < 2.6);
        let out = inject_noise(&tr, &spec);
        for axis in 0..3 {
            let amp_expected = 0.1 * overall_std(&tr.axis(axis));
            let d = added(&tr, &out, axis);
            let peak = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(
                peak <= amp_expected * (1.0 + 1e-9) && peak >= amp_expected * 0.98,
                "axis {axis}: peak {peak} vs amp {amp_expected}"
            );
            // Sinusoid variance is amp²/2.
            let var = d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64;
            assert!((var / (amp_expected * amp_expected / 2.0) - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn moving_std_warms_up_then_slides() {
        // Step change in scale: windowed std must move once the window clears
        // the boundary.
        let mut xs = vec![1.0, -1.0].repeat(50); // std 1
        xs.extend(vec![5.0, -5.0].repeat(50)); // std 5
        let w = 20;
        let stds = moving_std(&xs, w);
        assert!((stds[0] - 1.0).abs() < 1e-12); // warm-up value
        assert!((stds[60] - 1.0).abs() < 1e-12);
        assert!((stds[199] - 5.0).abs() < 1e-9);
        // Short trace: whole-trace std everywhere.
        let stds = moving_std(&[2.0, -2.0], 100);
        assert!((stds[0] - 2.0).abs() < 1e-12 && (stds[1] - 2.0).abs() < 1e-12);
    }
}
