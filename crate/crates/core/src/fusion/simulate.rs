//! Synthetic distance streams whose likelihood ratio is exactly the one the
//! sequential test computes, so Wald's error bounds apply with no slack.
//!
//! Construction: draw a base distance d ~ N(mean, variance), then keep it
//! with probability 1−Φ(z) for a genuine stream or Φ(z) for an imposter
//! stream. Both weights integrate to ½ against the symmetric base density,
//! so the two stream densities differ by the factor Φ(z)/(1−Φ(z)) — which is
//! precisely the per-observation ratio the test multiplies in.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::sprt::{normal_cdf, SprtConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Genuine,
    Imposter,
}

/// Infinite iterator of fused distances for one walker/device encounter.
#[derive(Debug, Clone)]
pub struct DistanceStream {
    kind: StreamKind,
    cfg: SprtConfig,
    rng: ChaCha8Rng,
}

impl DistanceStream {
    pub fn new(kind: StreamKind, cfg: SprtConfig, seed: u64) -> Self {
        Self {
            kind,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Iterator for DistanceStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let std = self.cfg.variance.sqrt();
        loop {
            let n: f64 = self.rng.sample(StandardNormal);
            let d = self.cfg.mean + std * n;
            let p_genuine = 1.0 - normal_cdf(self.cfg.z(d));
            let weight = match self.kind {
                StreamKind::Genuine => p_genuine,
                StreamKind::Imposter => 1.0 - p_genuine,
            };
            if self.rng.gen::<f64>() < weight {
                return Some(d);
            }
        }
    }
}
