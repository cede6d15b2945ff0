//! The three pair losses and their exact gradients with respect to both
//! embeddings and the probability head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{distance, MetricError};
use crate::nn::layer::sigmoid;

/// Probabilities are clamped this far inside (0,1) before logs.
pub const PROB_CLAMP: f64 = 1e-7;
/// Guard for the negative-branch gradient d/f at f → 0; the subgradient 0 is
/// taken on exactly coincident embeddings.
const DISTANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    Contrastive,
    CrossEntropy,
    Joint,
}

/// Margin, balance, and mode; defaults are the working configuration
/// (joint, m = 1.5, α = 0.1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub mode: LossMode,
    pub margin: f64,
    pub alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            mode: LossMode::Joint,
            margin: 1.5,
            alpha: 0.1,
        }
    }
}

impl LossConfig {
    pub fn contrastive() -> Self {
        Self { mode: LossMode::Contrastive, ..Self::default() }
    }

    pub fn cross_entropy() -> Self {
        Self { mode: LossMode::CrossEntropy, ..Self::default() }
    }

    pub fn joint() -> Self {
        Self::default()
    }

    pub fn needs_head(&self) -> bool {
        !matches!(self.mode, LossMode::Contrastive)
    }
}

/// The probability head: one dense unit over |φ₁−φ₂| plus a sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct PairHead {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl PairHead {
    /// Fan-in-uniform weights, zero bias.
    pub fn init(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = (6.0 / dim as f64).sqrt();
        Self {
            weights: (0..dim).map(|_| rng.gen_range(-bound..bound)).collect(),
            bias: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    fn check(&self, dim: usize) -> Result<(), MetricError> {
        if self.weights.len() != dim {
            return Err(MetricError::HeadDim {
                expected: self.weights.len(),
                actual: dim,
            });
        }
        Ok(())
    }

    /// w·|φ₁−φ₂| + b.
    pub fn logit(&self, phi1: &[f64], phi2: &[f64]) -> Result<f64, MetricError> {
        if phi1.len() != phi2.len() {
            return Err(MetricError::LengthMismatch {
                left: phi1.len(),
                right: phi2.len(),
            });
        }
        self.check(phi1.len())?;
        let mut z = self.bias;
        for i in 0..phi1.len() {
            z += self.weights[i] * (phi1[i] - phi2[i]).abs();
        }
        Ok(z)
    }
}

/// Similarity probability sigmoid(w·|φ₁−φ₂| + b).
pub fn pair_probability(head: &PairHead, phi1: &[f64], phi2: &[f64]) -> Result<f64, MetricError> {
    Ok(sigmoid(head.logit(phi1, phi2)?))
}

/// Batch contrastive loss: Σ y·f² + (1−y)·max(m−f, 0)².
pub fn contrastive_loss(batch: &[(&[f64], &[f64], u8)], margin: f64) -> f64 {
    batch
        .iter()
        .map(|(p1, p2, y)| {
            let f = crate::tensor::l2_distance(p1, p2);
            if *y == 1 {
                f * f
            } else {
                let gap = (margin - f).max(0.0);
                gap * gap
            }
        })
        .sum()
}

/// Batch pair cross-entropy: −Σ [y·ln p + (1−y)·ln(1−p)] with p clamped.
pub fn cross_entropy_pair_loss(batch: &[(&[f64], &[f64], u8)], head: &PairHead) -> f64 {
    batch
        .iter()
        .map(|(p1, p2, y)| {
            let p = sigmoid(head.logit(p1, p2).expect("head/embedding dims agree"))
                .clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if *y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum()
}

/// Batch joint loss: contrastive + α·cross-entropy. α = 0 reproduces the
/// contrastive value bitwise (the head term is skipped, not multiplied out).
pub fn joint_loss(
    batch: &[(&[f64], &[f64], u8)],
    head: &PairHead,
    margin: f64,
    alpha: f64,
) -> f64 {
    let mut total = contrastive_loss(batch, margin);
    if alpha != 0.0 {
        total += alpha * cross_entropy_pair_loss(batch, head);
    }
    total
}

/// One pair's loss plus exact gradients. Head gradient fields are zero-length
/// when the configured mode never touches the head.
#[derive(Debug, Clone)]
pub struct PairGrad {
    pub loss: f64,
    pub d_phi1: Vec<f64>,
    pub d_phi2: Vec<f64>,
    pub d_head_weights: Vec<f64>,
    pub d_head_bias: f64,
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Loss and gradients for one pair under `cfg`. The head gradient uses the
/// standard p−y form with the unclamped probability; the clamp only guards
/// the logs in the loss value.
pub fn pair_loss_grad(
    cfg: &LossConfig,
    head: Option<&PairHead>,
    phi1: &[f64],
    phi2: &[f64],
    y: u8,
) -> Result<PairGrad, MetricError> {
    let f = distance(phi1, phi2)?;
    let n = phi1.len();
    let mut out = PairGrad {
        loss: 0.0,
        d_phi1: vec![0.0; n],
        d_phi2: vec![0.0; n],
        d_head_weights: Vec::new(),
        d_head_bias: 0.0,
    };

    let contrastive_active = matches!(cfg.mode, LossMode::Contrastive | LossMode::Joint);
    let head_weight = match cfg.mode {
        LossMode::Contrastive => 0.0,
        LossMode::CrossEntropy => 1.0,
        LossMode::Joint => cfg.alpha,
    };

    if contrastive_active {
        if y == 1 {
            out.loss += f * f;
            for i in 0..n {
                let d = phi1[i] - phi2[i];
                out.d_phi1[i] += 2.0 * d;
                out.d_phi2[i] -= 2.0 * d;
            }
        } else {
            let gap = cfg.margin - f;
            if gap > 0.0 {
                out.loss += gap * gap;
                let scale = -2.0 * gap / f.max(DISTANCE_FLOOR);
                for i in 0..n {
                    let d = phi1[i] - phi2[i];
                    out.d_phi1[i] += scale * d;
                    out.d_phi2[i] -= scale * d;
                }
            }
        }
    }

    if head_weight != 0.0 {
        let head = head.ok_or(MetricError::HeadMissing)?;
        head.check(n)?;
        let z = head.logit(phi1, phi2)?;
        let p = sigmoid(z);
        let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let nll = if y == 1 { -pc.ln() } else { -(1.0 - pc).ln() };
        out.loss += head_weight * nll;
        let g = head_weight * (p - y as f64);
        out.d_head_weights = (0..n)
            .map(|i| g * (phi1[i] - phi2[i]).abs())
            .collect();
        out.d_head_bias = g;
        for i in 0..n {
            let s = g * head.weights[i] * sign(phi1[i] - phi2[i]);
            out.d_phi1[i] += s;
            out.d_phi2[i] -= s;
        }
    }

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn head_of(weights: Vec<f64>, bias: f64) -> PairHead {
        PairHead { weights, bias }
    }

    #[test]
    fn contrastive_unit_values() {
        let a = [0.5, 0.0];
        let o = [0.0, 0.0];
        // Similar at f = 0.5 → 0.25.
        assert!((contrastive_loss(&[(&a, &o, 1)], 1.5) - 0.25).abs() < 1e-15);
        // Dissimilar beyond the margin → exactly 0.
        let far = [2.0, 0.0];
        assert_eq!(contrastive_loss(&[(&far, &o, 0)], 1.5), 0.0);
        // Dissimilar at f = 1.0, margin 1.5 → 0.25.
        let near = [1.0, 0.0];
        assert!((contrastive_loss(&[(&near, &o, 0)], 1.5) - 0.25).abs() < 1e-15);
        // Never negative; sums over the batch.
        let batch = [(&a[..], &o[..], 1u8), (&far[..], &o[..], 0), (&near[..], &o[..], 0)];
        assert!((contrastive_loss(&batch, 1.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pair_probability_fixed_points() {
        let zero_head = head_of(vec![0.0; 4], 0.0);
        let p = pair_probability(&zero_head, &[1.0, 2.0, 3.0, 4.0], &[0.0; 4]).unwrap();
        assert_eq!(p, 0.5);
        let biased = head_of(vec![0.3, -0.7, 0.1], 1.25);
        let same = [0.4, 0.5, 0.6];
        let p = pair_probability(&biased, &same, &same).unwrap();
        assert!((p - sigmoid(1.25)).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_reference_points() {
        let zero_head = head_of(vec![0.0; 2], 0.0);
        let a = [1.0, 0.0];
        let b = [0.0, 0.0];
        // p = 0.5 both ways → ln 2.
        let ln2 = std::f64::consts::LN_2;
        assert!((cross_entropy_pair_loss(&[(&a, &b, 1)], &zero_head) - ln2).abs() < 1e-12);
        assert!((cross_entropy_pair_loss(&[(&a, &b, 0)], &zero_head) - ln2).abs() < 1e-12);
        // Confident correct positive → loss ≈ 0.
        let sure = head_of(vec![0.0; 2], 20.0);
        assert!(cross_entropy_pair_loss(&[(&a, &b, 1)], &sure) < 1e-6);
    }

    #[test]
    fn joint_with_zero_alpha_is_contrastive_bitwise() {
        let head = head_of(vec![0.4, -0.2, 0.9], -0.3);
        let p1 = [0.7, -1.1, 0.2];
        let p2 = [0.1, 0.4, -0.5];
        let batch = [(&p1[..], &p2[..], 0u8), (&p2[..], &p1[..], 1u8)];
        let joint = joint_loss(&batch, &head, 1.5, 0.0);
        let contrastive = contrastive_loss(&batch, 1.5);
        assert_eq!(joint.to_bits(), contrastive.to_bits());
        // And α > 0 adds exactly the scaled cross-entropy.
        let with = joint_loss(&batch, &head, 1.5, 0.1);
        let expect = contrastive + 0.1 * cross_entropy_pair_loss(&batch, &head);
        assert!((with - expect).abs() < 1e-15);
    }

    /// Central-difference check of every gradient field, all three modes.
    #[test]
    fn gradients_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let dim = 6;
        let eps = 1e-6;
        for cfg in [LossConfig::contrastive(), LossConfig::cross_entropy(), LossConfig::joint()] {
            for y in [0u8, 1u8] {
                let head = PairHead::init(dim, rng.gen());
                let phi1: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let phi2: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let loss_at = |p1: &[f64], p2: &[f64], h: &PairHead| {
                    pair_loss_grad(&cfg, Some(h), p1, p2, y).unwrap().loss
                };
                let g = pair_loss_grad(&cfg, Some(&head), &phi1, &phi2, y).unwrap();
                let check = |analytic: f64, numeric: f64, what: &str| {
                    let tol = 1e-5 * analytic.abs().max(numeric.abs()).max(1e-3);
                    assert!(
                        (analytic - numeric).abs() < tol,
                        "{cfg:?} y={y} {what}: {analytic} vs {numeric}"
                    );
                };
                for i in 0..dim {
                    let mut hi = phi1.clone();
                    let mut lo = phi1.clone();
                    hi[i] += eps;
                    lo[i] -= eps;
                    let numeric =
                        (loss_at(&hi, &phi2, &head) - loss_at(&lo, &phi2, &head)) / (2.0 * eps);
                    check(g.d_phi1[i], numeric, &format!("d_phi1[{i}]"));
                    let mut hi = phi2.clone();
                    let mut lo = phi2.clone();
                    hi[i] += eps;
                    lo[i] -= eps;
                    let numeric =
                        (loss_at(&phi1, &hi, &head) - loss_at(&phi1, &lo, &head)) / (2.0 * eps);
                    check(g.d_phi2[i], numeric, &format!("d_phi2[{i}]"));
                    if !g.d_head_weights.is_empty() {
                        let mut hi = head.clone();
                        let mut lo = head.clone();
                        hi.weights[i] += eps;
                        lo.weights[i] -= eps;
                        let numeric =
                            (loss_at(&phi1, &phi2, &hi) - loss_at(&phi1, &phi2, &lo)) / (2.0 * eps);
                        check(g.d_head_weights[i], numeric, &format!("d_head_w[{i}]"));
                    }
                }
                if cfg.needs_head() {
                    let mut hi = head.clone();
                    let mut lo = head.clone();
                    hi.bias += eps;
                    lo.bias -= eps;
                    let numeric =
                        (loss_at(&phi1, &phi2, &hi) - loss_at(&phi1, &phi2, &lo)) / (2.0 * eps);
                    check(g.d_head_bias, numeric, "d_head_bias");
                }
            }
        }
    }

    #[test]
    fn head_requirements_are_enforced() {
        let cfg = LossConfig::joint();
        let e = pair_loss_grad(&cfg, None, &[1.0], &[0.0], 1);
        assert!(matches!(e, Err(MetricError::HeadMissing)));
        let head = PairHead::init(4, 1);
        let e = pair_loss_grad(&cfg, Some(&head), &[1.0], &[0.0], 1);
        assert!(matches!(e, Err(MetricError::HeadDim { expected: 4, actual: 1 })));
        // Contrastive mode never needs it.
        let cfg = LossConfig::contrastive();
        assert!(pair_loss_grad(&cfg, None, &[1.0], &[0.0], 1).is_ok());
    }

    #[test]
    fn head_init_is_deterministic_and_bounded() {
        let a = PairHead::init(128, 9);
        let b = PairHead::init(128, 9);
        assert_eq!(a, b);
        assert_eq!(a.bias, 0.0);
        let bound = (6.0f64 / 128.0).sqrt();
        assert!(a.weights.iter().all(|w| w.abs() < bound));
    }
}
