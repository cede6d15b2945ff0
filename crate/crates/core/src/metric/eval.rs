//! Threshold-sweep evaluation: FAR/FRR curve, equal error rate, and
//! per-subject mean accuracy at the working threshold.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::siamese::SiameseModel;
use super::MetricError;
use crate::pairing::{PairRecord, SamplePool};

/// One sweep point. `far` counts imposters accepted (f < threshold), `frr`
/// genuine pairs rejected (f ≥ threshold).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean per-subject accuracy of the similar/dissimilar decision at
    /// `decision_threshold`.
    pub map: f64,
    pub eer: f64,
    pub eer_threshold: f64,
    /// Working threshold used for `map` (typically margin/2).
    pub decision_threshold: f64,
    pub n_positive: usize,
    pub n_negative: usize,
    pub far_frr_curve: Vec<RocPoint>,
}

/// The standard sweep: 0.1 to 3.0 in steps of 0.05.
pub fn threshold_sweep() -> Vec<f64> {
    (0..=58).map(|i| 0.1 + 0.05 * i as f64).collect()
}

/// Score `pairs` through the model: each distinct image is embedded once,
/// pairs are thresholded as similar iff f < threshold.
pub fn evaluate(
    model: &SiameseModel,
    pool: &SamplePool,
    pairs: &[PairRecord],
    thresholds: &[f64],
    decision_threshold: f64,
) -> Result<EvalReport, MetricError> {
    let n_positive = pairs.iter().filter(|p| p.y == 1).count();
    let n_negative = pairs.len() - n_positive;
    if n_positive == 0 || n_negative == 0 || thresholds.is_empty() {
        return Err(MetricError::EvalDegenerate {
            positives: n_positive,
            negatives: n_negative,
        });
    }

    // One embedding per distinct image.
    let mut phis: HashMap<usize, Vec<f64>> = HashMap::new();
    for rec in pairs {
        for id in [rec.left, rec.right] {
            if !phis.contains_key(&id) {
                let phi = model.embed_only(&pool.image(id).to_input())?;
                phis.insert(id, phi.into_vec());
            }
        }
    }
    let scored: Vec<(f64, u8, usize)> = pairs
        .iter()
        .map(|rec| {
            let f = crate::tensor::l2_distance(&phis[&rec.left], &phis[&rec.right]);
            (f, rec.y, rec.right)
        })
        .collect();

    let mut sorted_thresholds = thresholds.to_vec();
    sorted_thresholds.sort_by(f64::total_cmp);
    let curve: Vec<RocPoint> = sorted_thresholds
        .iter()
        .map(|&t| {
            let fa = scored.iter().filter(|(f, y, _)| *y == 0 && *f < t).count();
            let fr = scored.iter().filter(|(f, y, _)| *y == 1 && *f >= t).count();
            RocPoint {
                threshold: t,
                far: fa as f64 / n_negative as f64,
                frr: fr as f64 / n_positive as f64,
            }
        })
        .collect();

    // EER where the interpolated FAR and FRR segments cross.
    let gap = |p: &RocPoint| p.far - p.frr;
    let (eer, eer_threshold) = match curve.iter().position(|p| gap(p) >= 0.0) {
        Some(0) => ((curve[0].far + curve[0].frr) / 2.0, curve[0].threshold),
        Some(i) => {
            let (a, b) = (&curve[i - 1], &curve[i]);
            let w = -gap(a) / (gap(b) - gap(a));
            (
                a.far + w * (b.far - a.far),
                a.threshold + w * (b.threshold - a.threshold),
            )
        }
        None => {
            let last = curve.last().expect("non-empty sweep");
            ((last.far + last.frr) / 2.0, last.threshold)
        }
    };

    // Accuracy at the working threshold, macro-averaged over the probe
    // (right-hand) subject.
    let mut per_subject: HashMap<&str, (usize, usize)> = HashMap::new();
    for &(f, y, right) in &scored {
        let correct = ((f < decision_threshold) as u8) == y;
        let e = per_subject.entry(pool.subject(right)).or_insert((0, 0));
        e.0 += correct as usize;
        e.1 += 1;
    }
    let map = per_subject
        .values()
        .map(|&(c, t)| c as f64 / t as f64)
        .sum::<f64>()
        / per_subject.len() as f64;

    Ok(EvalReport {
        map,
        eer,
        eer_threshold,
        decision_threshold,
        n_positive,
        n_negative,
        far_frr_curve: curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ArchSpec, Dims, LayerSpec, Padding};
    use crate::pairing::{enumerate_pairs, SampleOrigin};
    use crate::signal::{synth_gait, StftConfig, SyntheticSubjectSpec};
    use rand::{Rng, SeedableRng};

    fn tiny_arch() -> ArchSpec {
        ArchSpec::new(
            "tiny-eval",
            Dims::Map { c: 1, h: 33, w: 42 },
            vec![
                LayerSpec::Conv2d {
                    in_channels: 1,
                    out_channels: 2,
                    kernel: (3, 3),
                    stride: 1,
                    padding: Padding::Same,
                    trainable: true,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool { pool: (2, 2), stride: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { inputs: 2 * 16 * 21, outputs: 8, trainable: true },
                LayerSpec::Relu,
            ],
        )
    }

    fn walker_pool(n_subjects: usize, base_seed: u64) -> (SamplePool, Vec<Vec<usize>>) {
        let cfg = StftConfig::default();
        let mut pool = SamplePool::new();
        let mut ids = Vec::new();
        for s in 0..n_subjects {
            let spec = SyntheticSubjectSpec::random(format!("s{s}"), base_seed + s as u64);
            let tr = synth_gait(&spec, 14.4, 50.0);
            ids.push(pool.add_trace(&tr, &cfg, SampleOrigin::Genuine).unwrap());
        }
        (pool, ids)
    }

    #[test]
    fn sweep_covers_the_documented_grid() {
        let t = threshold_sweep();
        assert_eq!(t.len(), 59);
        assert!((t[0] - 0.1).abs() < 1e-12);
        assert!((t[58] - 3.0).abs() < 1e-12);
        assert!((t[1] - t[0] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn curve_is_monotone_and_bounded() {
        let (pool, ids) = walker_pool(3, 40);
        let model = SiameseModel::from_arch(&tiny_arch(), 2, false).unwrap();
        let others = ids[1..].to_vec();
        let (pos, neg) = enumerate_pairs(&ids[0], &others);
        let pairs: Vec<_> = pos.chain(neg).collect();
        let report =
            evaluate(&model, &pool, &pairs, &threshold_sweep(), 0.75).unwrap();
        for w in report.far_frr_curve.windows(2) {
            assert!(w[1].far >= w[0].far, "FAR must not decrease");
            assert!(w[1].frr <= w[0].frr, "FRR must not increase");
        }
        assert!(report.map >= 0.0 && report.map <= 1.0);
        assert!(report.eer >= 0.0 && report.eer <= 1.0);
    }

    #[test]
    fn separated_distances_reach_zero_eer() {
        // Build a pool whose pair distances are controlled by a stub model:
        // identical images for positives, very different for negatives.
        let (pool, ids) = walker_pool(2, 60);
        let model = SiameseModel::from_arch(&tiny_arch(), 3, false).unwrap();
        // Self-pairs have distance exactly 0; cross pairs land elsewhere.
        let positives: Vec<_> = ids[0].iter().map(|&i| PairRecord { left: i, right: i, y: 1 }).collect();
        let others = ids[1..].to_vec();
        let (_, neg) = enumerate_pairs(&ids[0], &others);
        let mut pairs = positives;
        pairs.extend(neg);
        let report = evaluate(&model, &pool, &pairs, &threshold_sweep(), 0.75).unwrap();
        // Positives at f = 0 are below every threshold; as long as negatives
        // sit above the first sweep point, the curves cross at zero.
        let min_neg: f64 = {
            let phis: Vec<Vec<f64>> = ids
                .iter()
                .flatten()
                .map(|&i| model.embed_only(&pool.image(i).to_input()).unwrap().into_vec())
                .collect();
            let na = ids[0].len();
            let mut best = f64::MAX;
            for a in 0..na {
                for b in na..phis.len() {
                    best = best.min(crate::tensor::l2_distance(&phis[a], &phis[b]));
                }
            }
            best
        };
        if min_neg > 0.1 {
            assert_eq!(report.eer, 0.0, "min negative distance {min_neg}");
        }
        // Positives at distance 0 never cross any sweep threshold.
        assert_eq!(report.far_frr_curve[0].frr, 0.0);
        assert_eq!(report.far_frr_curve[58].frr, 0.0);
    }

    #[test]
    fn shuffled_labels_score_near_chance() {
        let (pool, ids) = walker_pool(4, 80);
        let model = SiameseModel::from_arch(&tiny_arch(), 4, false).unwrap();
        let all: Vec<usize> = ids.iter().flatten().copied().collect();
        let mut maps = Vec::new();
        for seed in 0..3 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut pairs = Vec::new();
            // Every ordered pair, label flipped at random.
            for &l in &all {
                for &r in &all {
                    pairs.push(PairRecord { left: l, right: r, y: rng.gen_range(0..2) as u8 });
                }
            }
            let report = evaluate(&model, &pool, &pairs, &threshold_sweep(), 0.75).unwrap();
            maps.push(report.map);
        }
        let mean = maps.iter().sum::<f64>() / maps.len() as f64;
        assert!((mean - 0.5).abs() < 0.05, "chance-level mAP came out {mean}");
    }

    #[test]
    fn single_label_test_sets_are_rejected() {
        let (pool, ids) = walker_pool(1, 90);
        let model = SiameseModel::from_arch(&tiny_arch(), 5, false).unwrap();
        let (pos, _) = enumerate_pairs(&ids[0], &[]);
        let pairs: Vec<_> = pos.collect();
        assert!(matches!(
            evaluate(&model, &pool, &pairs, &threshold_sweep(), 0.75),
            Err(MetricError::EvalDegenerate { negatives: 0, .. })
        ));
    }
}
