//! Synthetic gait generator: per-axis harmonic series over a cadence
//! fundamental, gravity on the vertical axis, and seeded sensor noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::trace::SensorTrace;

/// Standard gravity, added as a DC offset on the z axis so acceleration
/// magnitude oscillates once per stride — what a pedometer expects to see.
pub const GRAVITY_MS2: f64 = 9.81;

/// Human cadence band in Hz.
pub const CADENCE_BAND: (f64, f64) = (1.4, 2.6);

/// A walker model: everything that makes one synthetic subject's gait theirs.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSubjectSpec {
    pub subject_id: String,
    /// Cadence fundamental in Hz; human band is [1.4, 2.6].
    pub fundamental_hz: f64,
    /// `amplitudes[axis][k]` scales `sin(2π(k+1)·f·t + phases[axis][k])`.
    pub amplitudes: [Vec<f64>; 3],
    pub phases: [Vec<f64>; 3],
    /// Std of additive Gaussian sensor noise, m/s².
    pub noise_std: f64,
    pub seed: u64,
}

impl SyntheticSubjectSpec {
    /// Draw a plausible walker: cadence in the human band, 3–5 harmonics per
    /// axis with decaying amplitudes (z strongest — heel strikes), secret
    /// phases, and mild sensor noise.
    pub fn random(subject_id: impl Into<String>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fundamental_hz = rng.gen_range(CADENCE_BAND.0..CADENCE_BAND.1);
        let mut amplitudes: [Vec<f64>; 3] = Default::default();
        let mut phases: [Vec<f64>; 3] = Default::default();
        for axis in 0..3 {
            let n_harmonics = rng.gen_range(3..=5);
            let base = if axis == 2 {
                rng.gen_range(1.5..3.0)
            } else {
                rng.gen_range(0.4..1.2)
            };
            for k in 0..n_harmonics {
                let decay = 0.55f64.powi(k as i32);
                amplitudes[axis].push(base * decay * rng.gen_range(0.8..1.2));
                phases[axis].push(rng.gen_range(0.0..std::f64::consts::TAU));
            }
        }
        Self {
            subject_id: subject_id.into(),
            fundamental_hz,
            amplitudes,
            phases,
            noise_std: rng.gen_range(0.05..0.12),
            seed,
        }
    }

    /// The same walker in a later recording session: cadence shifted a
    /// little, harmonic amplitudes rescaled, phases wandered. `severity` 0
    /// changes nothing but the sensor-noise seed; around 1 is a markedly
    /// different gait.
    pub fn drifted(&self, severity: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        out.seed = seed;
        let shift = severity * rng.gen_range(-0.15..0.15);
        out.fundamental_hz =
            (self.fundamental_hz + shift).clamp(CADENCE_BAND.0, CADENCE_BAND.1 - 1e-9);
        for axis in 0..3 {
            for a in &mut out.amplitudes[axis] {
                *a *= 1.0 + severity * rng.gen_range(-0.35..0.35);
            }
            for p in &mut out.phases[axis] {
                *p = (*p + severity * rng.gen_range(-1.0..1.0))
                    .rem_euclid(std::f64::consts::TAU);
            }
        }
        out
    }
}

/// Render a walker to a uniformly sampled trace. Pure: (spec, duration, rate)
/// fully determine the output.
pub fn synth_gait(spec: &SyntheticSubjectSpec, duration_s: f64, sample_rate: f64) -> SensorTrace {
    let n = (duration_s * sample_rate).round() as usize;
    assert!(n >= 1, "duration x sample_rate must cover at least one sample");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = (spec.noise_std > 0.0).then(|| Normal::new(0.0, spec.noise_std).unwrap());
    let omega = std::f64::consts::TAU * spec.fundamental_hz;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / sample_rate;
        let mut s = [0.0f64; 3];
        for axis in 0..3 {
            let mut v = 0.0;
            for (k, (&a, &p)) in spec.amplitudes[axis]
                .iter()
                .zip(&spec.phases[axis])
                .enumerate()
            {
                v += a * ((k + 1) as f64 * omega * t + p).sin();
            }
            if let Some(dist) = &noise {
                v += dist.sample(&mut rng);
            }
            s[axis] = v;
        }
        s[2] += GRAVITY_MS2;
        samples.push(s);
    }
    SensorTrace::new(sample_rate, samples, spec.subject_id.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pure_tone_spec() -> SyntheticSubjectSpec {
        SyntheticSubjectSpec {
            subject_id: "tone".into(),
            fundamental_hz: 2.0,
            amplitudes: [vec![1.0], vec![], vec![]],
            phases: [vec![0.0], vec![], vec![]],
            noise_std: 0.0,
            seed: 7,
        }
    }

    #[test]
    fn single_harmonic_is_an_exact_sine() {
        let tr = synth_gait(&pure_tone_spec(), 2.0, 50.0);
        assert_eq!(tr.len(), 100);
        for (i, s) in tr.samples.iter().enumerate() {
            let t = i as f64 / 50.0;
            assert_eq!(s[0], (std::f64::consts::TAU * 2.0 * t).sin());
            assert_eq!(s[1], 0.0);
            assert_eq!(s[2], GRAVITY_MS2);
        }
    }

    #[test]
    fn same_spec_same_trace() {
        let spec = SyntheticSubjectSpec::random("a", 42);
        let t1 = synth_gait(&spec, 5.0, 50.0);
        let t2 = synth_gait(&spec, 5.0, 50.0);
        assert_eq!(t1.samples, t2.samples);
    }

    #[test]
    fn random_specs_stay_in_the_human_band() {
        for seed in 0..32 {
            let spec = SyntheticSubjectSpec::random(format!("s{seed}"), seed);
            assert!(spec.fundamental_hz >= CADENCE_BAND.0 && spec.fundamental_hz < CADENCE_BAND.1);
            for axis in 0..3 {
                assert!(spec.amplitudes[axis].len() >= 3);
                assert!(spec.amplitudes[axis].iter().all(|&a| a >= 0.0));
                assert_eq!(spec.amplitudes[axis].len(), spec.phases[axis].len());
            }
        }
    }

    #[test]
    fn different_seeds_make_different_walkers() {
        let a = SyntheticSubjectSpec::random("a", 1);
        let b = SyntheticSubjectSpec::random("b", 2);
        assert_ne!(a.fundamental_hz, b.fundamental_hz);
        assert_ne!(a.amplitudes, b.amplitudes);
    }

    #[test]
    fn drift_perturbs_without_leaving_the_band() {
        let base = SyntheticSubjectSpec::random("d", 9);
        let zero = base.drifted(0.0, 77);
        assert_eq!(zero.fundamental_hz, base.fundamental_hz);
        assert_eq!(zero.amplitudes, base.amplitudes);
        assert_eq!(zero.seed, 77); // only the sensor-noise stream moves
        let far = base.drifted(1.0, 78);
        assert_eq!(far.subject_id, base.subject_id);
        assert_ne!(far.amplitudes, base.amplitudes);
        assert!(far.fundamental_hz >= CADENCE_BAND.0 && far.fundamental_hz < CADENCE_BAND.1);
    }
}
