//! End-to-end orchestration shared by the CLI and the system tests:
//! synthetic walker cohorts, pair assembly into the reservoir, verifier
//! training, sweep evaluation, and fused enrollment decisions.

use rand::Rng;
use thiserror::Error;

use crate::fusion::{spatial_distance, FusionError};
use crate::metric::{evaluate, train, EpochStat, EvalReport, MetricError, SiameseModel, TrainConfig};
use crate::nn::{ArchSpec, NnError};
use crate::pairing::{enumerate_pairs, PairRecord, ReservoirBuffer, SampleOrigin, SamplePool};
use crate::signal::{synth_gait, SensorTrace, SignalError, StftConfig, SyntheticSubjectSpec};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("subject {subject} yields {images} images; need more than the {holdout} held out")]
    TooFewImages {
        subject: String,
        images: usize,
        holdout: usize,
    },
    #[error("bad pipeline config: {0}")]
    BadConfig(String),
}

/// How to grow a cohort of synthetic walkers.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortConfig {
    pub subjects: usize,
    pub duration_s: f64,
    pub sample_rate: f64,
    pub stft: StftConfig,
    /// Images per subject reserved for evaluation, taken from the tail of
    /// each trace so train and test never share raw samples.
    pub holdout: usize,
    pub seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            subjects: 8,
            duration_s: 120.0,
            sample_rate: 50.0,
            stft: StftConfig::default(),
            holdout: 5,
            seed: 0,
        }
    }
}

/// A cohort: the walker models, their rendered traces, and the image pool
/// with a per-subject train/test split.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub specs: Vec<SyntheticSubjectSpec>,
    pub traces: Vec<SensorTrace>,
    pub pool: SamplePool,
    pub train_ids: Vec<Vec<usize>>,
    pub test_ids: Vec<Vec<usize>>,
}

/// splitmix64: decorrelates per-subject seeds from consecutive masters.
pub fn subject_seed(master: u64, index: usize) -> u64 {
    let mut z = master
        .wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn build_cohort(cfg: &CohortConfig) -> Result<Cohort, PipelineError> {
    if cfg.subjects == 0 {
        return Err(PipelineError::BadConfig("cohort needs at least one subject".into()));
    }
    let specs: Vec<SyntheticSubjectSpec> = (0..cfg.subjects)
        .map(|i| SyntheticSubjectSpec::random(format!("s{i:02}"), subject_seed(cfg.seed, i)))
        .collect();
    cohort_from_specs(specs, cfg)
}

/// The same walkers in a later session: every spec drifted, traces and the
/// pool rebuilt. Evaluation splits follow the same tail rule.
pub fn drifted_cohort(
    base: &Cohort,
    cfg: &CohortConfig,
    severity: f64,
    seed: u64,
) -> Result<Cohort, PipelineError> {
    let specs = base
        .specs
        .iter()
        .enumerate()
        .map(|(i, s)| s.drifted(severity, subject_seed(seed, i)))
        .collect();
    cohort_from_specs(specs, cfg)
}

fn cohort_from_specs(
    specs: Vec<SyntheticSubjectSpec>,
    cfg: &CohortConfig,
) -> Result<Cohort, PipelineError> {
    let mut pool = SamplePool::new();
    let mut traces = Vec::with_capacity(specs.len());
    let mut train_ids = Vec::with_capacity(specs.len());
    let mut test_ids = Vec::with_capacity(specs.len());
    for spec in &specs {
        let trace = synth_gait(spec, cfg.duration_s, cfg.sample_rate);
        let ids = pool.add_trace(&trace, &cfg.stft, SampleOrigin::Genuine)?;
        if ids.len() <= cfg.holdout {
            return Err(PipelineError::TooFewImages {
                subject: spec.subject_id.clone(),
                images: ids.len(),
                holdout: cfg.holdout,
            });
        }
        let cut = ids.len() - cfg.holdout;
        train_ids.push(ids[..cut].to_vec());
        test_ids.push(ids[cut..].to_vec());
        traces.push(trace);
    }
    Ok(Cohort {
        specs,
        traces,
        pool,
        train_ids,
        test_ids,
    })
}

/// Stream every subject's training pairs through one reservoir: positives
/// from the owner's own images, negatives against every other subject.
pub fn training_buffer(cohort: &Cohort, capacity: usize, seed: u64) -> ReservoirBuffer {
    let mut buf = ReservoirBuffer::new(capacity, seed);
    for (i, owner) in cohort.train_ids.iter().enumerate() {
        let negative_classes: Vec<Vec<usize>> = cohort
            .train_ids
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, ids)| ids.clone())
            .collect();
        let (pos, neg) = enumerate_pairs(owner, &negative_classes);
        buf.admit_positives(pos);
        buf.admit_negatives(neg);
    }
    buf
}

/// Held-out pairs: distinct same-subject positives, and every ordered
/// cross-subject combination so each subject appears as the probe (right)
/// side against every other walker.
pub fn eval_pairs(cohort: &Cohort) -> Vec<PairRecord> {
    let mut pairs = Vec::new();
    for (i, ids) in cohort.test_ids.iter().enumerate() {
        for (a_idx, &a) in ids.iter().enumerate() {
            for &b in &ids[a_idx + 1..] {
                pairs.push(PairRecord { left: a, right: b, y: 1 });
            }
        }
        for (j, other) in cohort.test_ids.iter().enumerate() {
            if j == i {
                continue;
            }
            for &a in ids {
                for &b in other {
                    pairs.push(PairRecord { left: a, right: b, y: 0 });
                }
            }
        }
    }
    pairs
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifierConfig {
    pub train: TrainConfig,
    pub reservoir_capacity: usize,
    pub buffer_seed: u64,
    pub model_seed: u64,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            reservoir_capacity: 128,
            buffer_seed: 1,
            model_seed: 0,
        }
    }
}

pub struct TrainedVerifier {
    pub model: SiameseModel,
    pub history: Vec<EpochStat>,
    /// Peak pair records resident in the reservoir while it filled.
    pub buffer_peak: usize,
}

/// Initialize a fresh model on `arch` and train it on the cohort.
pub fn train_verifier(
    cohort: &Cohort,
    arch: &ArchSpec,
    cfg: &VerifierConfig,
) -> Result<TrainedVerifier, PipelineError> {
    let mut model =
        SiameseModel::from_arch(arch, cfg.model_seed, cfg.train.loss.needs_head())?;
    let history = resume_training(&mut model, cohort, cfg)?;
    let buffer = training_buffer(cohort, cfg.reservoir_capacity, cfg.buffer_seed);
    Ok(TrainedVerifier {
        model,
        history,
        buffer_peak: buffer.max_resident(),
    })
}

/// Continue training an existing model (fine-tuning, transfer targets).
pub fn resume_training(
    model: &mut SiameseModel,
    cohort: &Cohort,
    cfg: &VerifierConfig,
) -> Result<Vec<EpochStat>, PipelineError> {
    let buffer = training_buffer(cohort, cfg.reservoir_capacity, cfg.buffer_seed);
    Ok(train(model, &cohort.pool, &buffer, &cfg.train)?)
}

/// Score the cohort's held-out pairs over the standard threshold sweep.
pub fn evaluate_verifier(
    model: &SiameseModel,
    cohort: &Cohort,
    decision_threshold: f64,
) -> Result<EvalReport, PipelineError> {
    let pairs = eval_pairs(cohort);
    Ok(evaluate(
        model,
        &cohort.pool,
        &pairs,
        &crate::metric::threshold_sweep(),
        decision_threshold,
    )?)
}

/// Embed a subject's gallery for fused decisions.
pub fn enroll(
    model: &SiameseModel,
    pool: &SamplePool,
    ids: &[usize],
) -> Result<Vec<Vec<f64>>, PipelineError> {
    ids.iter()
        .map(|&id| {
            Ok(model
                .embed_only(&pool.image(id).to_input())
                .map_err(MetricError::from)?
                .into_vec())
        })
        .collect()
}

/// Fraction of probes whose fused distance to the enrollment falls below
/// the threshold. Probes may come from a different pool than the enrollment
/// (later sessions, attack imagery).
#[allow(clippy::too_many_arguments)]
pub fn acceptance_rate(
    model: &SiameseModel,
    enrolled: &[Vec<f64>],
    pool: &SamplePool,
    probe_ids: &[usize],
    threshold: f64,
    fusion_count: usize,
    rng: &mut impl Rng,
) -> Result<f64, PipelineError> {
    if probe_ids.is_empty() {
        return Err(PipelineError::BadConfig("no probe images supplied".into()));
    }
    let mut accepted = 0usize;
    for &id in probe_ids {
        let phi = model
            .embed_only(&pool.image(id).to_input())
            .map_err(MetricError::from)?
            .into_vec();
        let d = spatial_distance(&phi, enrolled, fusion_count, rng)?;
        if d < threshold {
            accepted += 1;
        }
    }
    Ok(accepted as f64 / probe_ids.len() as f64)
}
