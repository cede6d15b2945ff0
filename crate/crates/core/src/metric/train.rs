//! The training loop: balanced seeded batches over the reservoir, one
//! forward per unique image per step, summed branch gradients, SGD.

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::losses::{pair_loss_grad, LossConfig};
use super::siamese::SiameseModel;
use super::MetricError;
use crate::nn::Gradients;
use crate::pairing::{PairRecord, ReservoirBuffer, SamplePool};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub epochs: usize,
    /// Pairs per step; split half positive, half negative.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Stop once the epoch's mean per-pair loss drops below this.
    pub target_loss: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            epochs: 100,
            batch_size: 20,
            learning_rate: 0.01,
            target_loss: None,
            seed: 0,
        }
    }
}

/// One line of training history; serializes to the JSONL emitted by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    /// Mean per-pair loss over the epoch.
    pub loss: f64,
    pub wall_ms: f64,
}

/// Train in place over the reservoir; returns per-epoch history. Each step
/// draws a balanced batch, evaluates every distinct image once, sums the two
/// branches' gradients (plus the head's contribution) and takes one SGD step.
pub fn train(
    model: &mut SiameseModel,
    pool: &SamplePool,
    buffer: &ReservoirBuffer,
    cfg: &TrainConfig,
) -> Result<Vec<EpochStat>, MetricError> {
    let positives = buffer.positives();
    let negatives = buffer.negatives();
    let total = positives.len() + negatives.len();
    if total == 0 {
        return Err(MetricError::EmptyBuffer);
    }
    if cfg.batch_size == 0 || cfg.batch_size > total {
        return Err(MetricError::BatchTooLarge {
            batch: cfg.batch_size,
            available: total,
        });
    }
    if cfg.loss.needs_head() && model.head.is_none() {
        return Err(MetricError::HeadMissing);
    }

    // Half the batch from each label; a lone non-empty half takes it all.
    let (half_pos, half_neg) = match (positives.is_empty(), negatives.is_empty()) {
        (false, false) => {
            let hp = (cfg.batch_size / 2).max(1);
            (hp, (cfg.batch_size - hp).max(1))
        }
        (false, true) => (cfg.batch_size, 0),
        (true, false) => (0, cfg.batch_size),
        (true, true) => unreachable!("total > 0"),
    };
    let steps_per_epoch = {
        let need = |len: usize, take: usize| {
            if take == 0 { 0 } else { len.div_ceil(take) }
        };
        need(positives.len(), half_pos)
            .max(need(negatives.len(), half_neg))
            .max(1)
    };

    // Network inputs, materialized once per distinct pool id.
    let mut inputs: HashMap<usize, Tensor> = HashMap::new();
    for rec in positives.iter().chain(negatives) {
        for id in [rec.left, rec.right] {
            inputs
                .entry(id)
                .or_insert_with(|| pool.image(id).to_input());
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pos_order: Vec<usize> = (0..positives.len()).collect();
    let mut neg_order: Vec<usize> = (0..negatives.len()).collect();
    let mut history = Vec::new();

    for epoch in 1..=cfg.epochs {
        let t0 = Instant::now();
        pos_order.shuffle(&mut rng);
        neg_order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        let mut epoch_pairs = 0usize;

        for step in 0..steps_per_epoch {
            let mut batch: Vec<PairRecord> = Vec::with_capacity(half_pos + half_neg);
            for j in 0..half_pos {
                batch.push(positives[pos_order[(step * half_pos + j) % positives.len()]]);
            }
            for j in 0..half_neg {
                batch.push(negatives[neg_order[(step * half_neg + j) % negatives.len()]]);
            }

            let (loss_sum, n_pairs) = train_step(model, &inputs, &batch, cfg)?;
            if !loss_sum.is_finite() {
                return Err(MetricError::Diverged {
                    epoch,
                    loss: loss_sum,
                });
            }
            epoch_loss += loss_sum;
            epoch_pairs += n_pairs;
        }

        let loss = epoch_loss / epoch_pairs as f64;
        if !loss.is_finite() {
            return Err(MetricError::Diverged { epoch, loss });
        }
        history.push(EpochStat {
            epoch,
            loss,
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
        });
        if cfg.target_loss.is_some_and(|t| loss < t) {
            break;
        }
    }
    Ok(history)
}

/// One SGD step over a batch; returns (summed pair loss, pair count).
fn train_step(
    model: &mut SiameseModel,
    inputs: &HashMap<usize, Tensor>,
    batch: &[PairRecord],
    cfg: &TrainConfig,
) -> Result<(f64, usize), MetricError> {
    // Distinct images in batch order.
    let mut slot_of: HashMap<usize, usize> = HashMap::new();
    let mut ids: Vec<usize> = Vec::new();
    for rec in batch {
        for id in [rec.left, rec.right] {
            slot_of.entry(id).or_insert_with(|| {
                ids.push(id);
                ids.len() - 1
            });
        }
    }

    // One forward per distinct image.
    let mut phis = Vec::with_capacity(ids.len());
    let mut caches = Vec::with_capacity(ids.len());
    for &id in &ids {
        let (phi, cache) = model.trunk.forward(&inputs[&id])?;
        phis.push(phi);
        caches.push(cache);
    }

    // Pair losses; dL/dφ accumulated per image, head grads accumulated flat.
    let dim = phis.first().map_or(0, Tensor::len);
    let mut d_phi = vec![vec![0.0f64; dim]; ids.len()];
    let mut d_head_w = vec![0.0f64; model.head.as_ref().map_or(0, |h| h.dim())];
    let mut d_head_b = 0.0f64;
    let mut loss_sum = 0.0f64;
    for rec in batch {
        let sl = slot_of[&rec.left];
        let sr = slot_of[&rec.right];
        let g = pair_loss_grad(
            &cfg.loss,
            model.head.as_ref(),
            phis[sl].as_slice(),
            phis[sr].as_slice(),
            rec.y,
        )?;
        loss_sum += g.loss;
        for i in 0..dim {
            d_phi[sl][i] += g.d_phi1[i];
            d_phi[sr][i] += g.d_phi2[i];
        }
        if !g.d_head_weights.is_empty() {
            for i in 0..d_head_w.len() {
                d_head_w[i] += g.d_head_weights[i];
            }
            d_head_b += g.d_head_bias;
        }
    }

    // Mean gradient over the batch: one backward per distinct image, summed.
    let scale = 1.0 / batch.len() as f64;
    let mut total = Gradients::zeros_like(&model.trunk);
    let out_shape = phis[0].shape().to_vec();
    for (slot, cache) in caches.iter().enumerate() {
        let mut d_our = d_phi[slot].clone();
        for v in &mut d_our {
            *v *= scale;
        }
        let d_out = Tensor::from_vec(&out_shape, d_our).expect("embedding-shaped");
        let (g, _) = model.trunk.backward(cache, &d_out, false)?;
        total.add_assign(&g);
    }
    model.trunk.sgd_step(&total, cfg.learning_rate)?;

    if let Some(head) = model.head.as_mut() {
        if !d_head_w.is_empty() {
            for i in 0..d_head_w.len() {
                head.weights[i] -= cfg.learning_rate * d_head_w[i] * scale;
            }
            head.bias -= cfg.learning_rate * d_head_b * scale;
            if !head.bias.is_finite() || head.weights.iter().any(|w| !w.is_finite()) {
                return Err(MetricError::Diverged {
                    epoch: 0,
                    loss: loss_sum,
                });
            }
        }
    }
    Ok((loss_sum, batch.len()))
}
