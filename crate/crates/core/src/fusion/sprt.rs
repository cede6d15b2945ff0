//! Wald's sequential probability ratio test over embedding distances.
//!
//! Each observed distance d maps to z = (d − mean)/denominator and then to a
//! per-observation likelihood ratio Φ(z)/(1−Φ(z)): small distances shrink the
//! running product toward acceptance, large ones grow it toward rejection.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::FusionError;

/// Probabilities are kept this far from {0, 1} so ratios stay finite.
const PROB_CLAMP: f64 = 1e-12;

/// What goes in the denominator of z. `Variance` is the shipped behavior;
/// `StdDev` is the conventional standardization, kept selectable because the
/// two disagree whenever variance ≠ 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenomMode {
    Variance,
    StdDev,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SprtConfig {
    /// False-accept rate the bounds are designed for.
    pub alpha: f64,
    /// False-reject rate the bounds are designed for.
    pub beta: f64,
    /// Distance scores center here; typically margin/2.
    pub mean: f64,
    pub variance: f64,
    pub denom: DenomMode,
    /// Forced decision after this many observations.
    pub max_observations: usize,
    /// Enrolled samples averaged into one fused distance.
    pub fusion_count: usize,
}

impl Default for SprtConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            beta: 0.01,
            mean: 0.75,
            variance: 0.25,
            denom: DenomMode::Variance,
            max_observations: 50,
            fusion_count: 8,
        }
    }
}

impl SprtConfig {
    /// Rejection boundary A = (1−β)/α.
    pub fn upper_bound(&self) -> f64 {
        (1.0 - self.beta) / self.alpha
    }

    /// Acceptance boundary B = β/(1−α).
    pub fn lower_bound(&self) -> f64 {
        self.beta / (1.0 - self.alpha)
    }

    pub fn z(&self, distance: f64) -> f64 {
        let denom = match self.denom {
            DenomMode::Variance => self.variance,
            DenomMode::StdDev => self.variance.sqrt(),
        };
        (distance - self.mean) / denom
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        let ok_rate = |r: f64| r > 0.0 && r < 1.0;
        if !ok_rate(self.alpha) || !ok_rate(self.beta) {
            return Err(FusionError::BadConfig(format!(
                "error rates must lie in (0,1); got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        if !(self.variance > 0.0) || !self.variance.is_finite() {
            return Err(FusionError::BadConfig(format!(
                "variance must be positive and finite; got {}",
                self.variance
            )));
        }
        if self.max_observations == 0 {
            return Err(FusionError::BadConfig(
                "max_observations must be at least 1".into(),
            ));
        }
        if self.fusion_count == 0 {
            return Err(FusionError::BadConfig(
                "fusion_count must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2) / 2.0
}

/// Probability that a fused distance came from the enrolled walker:
/// 1 − Φ(z), clamped away from {0, 1}.
pub fn similarity_probability(distance: f64, cfg: &SprtConfig) -> f64 {
    (1.0 - normal_cdf(cfg.z(distance))).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Per-observation ratio (1−p)/p = Φ(z)/(1−Φ(z)).
pub fn likelihood_ratio(distance: f64, cfg: &SprtConfig) -> f64 {
    let p = similarity_probability(distance, cfg);
    (1.0 - p) / p
}

/// Mean embedding distance from a probe to `k` enrolled embeddings sampled
/// without replacement (all of them when fewer than `k` exist).
pub fn spatial_distance(
    probe: &[f64],
    enrolled: &[Vec<f64>],
    k: usize,
    rng: &mut impl Rng,
) -> Result<f64, FusionError> {
    if enrolled.is_empty() || k == 0 {
        return Err(FusionError::EmptyEnrollment);
    }
    let mut idx: Vec<usize> = (0..enrolled.len()).collect();
    idx.shuffle(rng);
    idx.truncate(k.min(enrolled.len()));
    let sum: f64 = idx
        .iter()
        .map(|&i| crate::tensor::l2_distance(probe, &enrolled[i]))
        .sum();
    Ok(sum / idx.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SprtDecision {
    /// The stream is consistent with the enrolled walker.
    Accept,
    /// The stream came from someone else.
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SprtOutcome {
    pub decision: SprtDecision,
    pub observations: usize,
    /// Running product λ at the moment the test stopped.
    pub final_ratio: f64,
    /// The test hit `max_observations` without crossing either bound.
    pub truncated: bool,
    /// λ after each observation.
    pub log: Vec<f64>,
}

/// Incremental test state, for callers that receive distances one at a time.
#[derive(Debug, Clone)]
pub struct SprtState {
    lambda: f64,
    observations: usize,
    log: Vec<f64>,
}

impl Default for SprtState {
    fn default() -> Self {
        Self::new()
    }
}

impl SprtState {
    pub fn new() -> Self {
        Self {
            lambda: 1.0,
            observations: 0,
            log: Vec::new(),
        }
    }

    pub fn ratio(&self) -> f64 {
        self.lambda
    }

    pub fn observations(&self) -> usize {
        self.observations
    }

    /// Fold in one fused distance. Returns the outcome once a bound is hit
    /// or the observation budget runs out; acceptance is checked first.
    pub fn update(&mut self, distance: f64, cfg: &SprtConfig) -> Option<SprtOutcome> {
        self.lambda *= likelihood_ratio(distance, cfg);
        self.observations += 1;
        self.log.push(self.lambda);
        let decided = if self.lambda <= cfg.lower_bound() {
            Some((SprtDecision::Accept, false))
        } else if self.lambda >= cfg.upper_bound() {
            Some((SprtDecision::Reject, false))
        } else if self.observations >= cfg.max_observations {
            // Forced call: whichever hypothesis the evidence leans toward.
            let d = if self.lambda < 1.0 {
                SprtDecision::Accept
            } else {
                SprtDecision::Reject
            };
            Some((d, true))
        } else {
            None
        };
        decided.map(|(decision, truncated)| SprtOutcome {
            decision,
            observations: self.observations,
            final_ratio: self.lambda,
            truncated,
            log: std::mem::take(&mut self.log),
        })
    }
}

/// Run the full test over a distance stream. The stream must be able to
/// supply `max_observations` values; infinite iterators are fine.
pub fn run_sprt(
    distances: impl IntoIterator<Item = f64>,
    cfg: &SprtConfig,
) -> Result<SprtOutcome, FusionError> {
    cfg.validate()?;
    let mut state = SprtState::new();
    for d in distances {
        if let Some(outcome) = state.update(d, cfg) {
            return Ok(outcome);
        }
    }
    Err(FusionError::BadConfig(format!(
        "distance stream ended after {} observations without a decision",
        state.observations
    )))
}
