//! Attack simulation: zero-effort impersonation by unseen walkers, replay of
//! captured traces (optionally laundered through a denoiser), the
//! obfuscation defense's training buffer, and its usability cost.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::FusionError;
use crate::metric::{MetricError, SiameseModel};
use crate::pairing::{enumerate_pairs, make_defense_pairs, ReservoirBuffer, SampleOrigin, SamplePool};
use crate::pipeline::{subject_seed, Cohort, PipelineError};
use crate::signal::{
    inject_noise, pedometer_error, synth_gait, Denoiser, NoiseSpec, SensorTrace, SignalError,
    StftConfig, SyntheticSubjectSpec,
};
use crate::tensor::l2_distance;

#[derive(Debug, Error)]
pub enum ThreatError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("bad attack config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    /// Unseen walkers probing with their own gait.
    Passive,
    /// A captured owner trace fed back to the sensor.
    Replay,
}

/// Everything that determines one attack run; echoed into its report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackScenario {
    pub kind: AttackKind,
    /// Obfuscation noise the device injected into app-visible data.
    pub defense: Option<NoiseSpec>,
    /// The attacker's attempt to scrub that noise back out.
    pub denoiser: Option<Denoiser>,
    /// Enrolled samples fused into each decision.
    pub batch_fusion_size: usize,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectOutcome {
    pub subject: String,
    pub trials: usize,
    pub successes: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub scenario: AttackScenario,
    /// Successful probes over all trials.
    pub success_ratio: f64,
    pub per_subject: Vec<SubjectOutcome>,
    /// Device-side step-count error the defense inflicted, when one ran.
    pub pedometer_error: Option<f64>,
}

impl AttackReport {
    /// Single source of truth: per-subject ratios and the total are both
    /// derived from the same counts, so the trial-weighted average of the
    /// former reproduces the latter exactly.
    fn from_counts(
        mut scenario: AttackScenario,
        counts: Vec<(String, usize, usize)>,
        pedometer_error: Option<f64>,
    ) -> Self {
        let trials: usize = counts.iter().map(|(_, t, _)| t).sum();
        let successes: usize = counts.iter().map(|(_, _, s)| s).sum();
        scenario.trials = trials;
        let per_subject = counts
            .into_iter()
            .map(|(subject, t, s)| SubjectOutcome {
                subject,
                trials: t,
                successes: s,
                ratio: s as f64 / t as f64,
            })
            .collect();
        Self {
            scenario,
            success_ratio: successes as f64 / trials as f64,
            per_subject,
            pedometer_error,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassiveAttackConfig {
    /// Walkers never seen in training, each probing with their own gait.
    pub attackers: usize,
    pub duration_s: f64,
    pub sample_rate: f64,
    pub stft: StftConfig,
    /// A probe succeeds when its fused distance stays below this.
    pub threshold: f64,
    /// Fusion sizes to evaluate on common random numbers.
    pub batch_sizes: Vec<usize>,
    pub seed: u64,
}

impl Default for PassiveAttackConfig {
    fn default() -> Self {
        Self {
            attackers: 50,
            duration_s: 40.0,
            sample_rate: 50.0,
            stft: StftConfig::default(),
            threshold: 0.75,
            batch_sizes: vec![1, 4, 8, 16, 32],
            seed: 0,
        }
    }
}

/// Zero-effort attack: cohorts of unseen walkers probe the enrollment, one
/// report per fusion size. All sizes see the same attackers, the same probe
/// embeddings, and nested prefixes of the same per-probe gallery shuffle, so
/// differences between reports are the fusion size and nothing else.
pub fn passive_attack(
    model: &SiameseModel,
    enrolled: &[Vec<f64>],
    cfg: &PassiveAttackConfig,
) -> Result<Vec<AttackReport>, ThreatError> {
    if enrolled.is_empty() {
        return Err(FusionError::EmptyEnrollment.into());
    }
    if cfg.attackers == 0 || cfg.batch_sizes.is_empty() {
        return Err(ThreatError::BadConfig(
            "need at least one attacker and one batch size".into(),
        ));
    }

    // Probe embeddings, grouped per attacker.
    let mut probes: Vec<(String, Vec<Vec<f64>>)> = Vec::with_capacity(cfg.attackers);
    for i in 0..cfg.attackers {
        let spec = SyntheticSubjectSpec::random(format!("a{i:02}"), subject_seed(cfg.seed, i));
        let trace = synth_gait(&spec, cfg.duration_s, cfg.sample_rate);
        let mut pool = SamplePool::new();
        let ids = pool.add_trace(&trace, &cfg.stft, SampleOrigin::Genuine)?;
        let mut phis = Vec::with_capacity(ids.len());
        for id in ids {
            phis.push(
                model
                    .embed_only(&pool.image(id).to_input())
                    .map_err(MetricError::from)?
                    .into_vec(),
            );
        }
        probes.push((spec.subject_id, phis));
    }

    // One gallery ordering per probe, shared across batch sizes.
    let mut orders_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x70726f6265); // "probe"
    let orders: Vec<Vec<usize>> = probes
        .iter()
        .flat_map(|(_, phis)| phis.iter())
        .map(|_| {
            let mut idx: Vec<usize> = (0..enrolled.len()).collect();
            idx.shuffle(&mut orders_rng);
            idx
        })
        .collect();

    let mut reports = Vec::with_capacity(cfg.batch_sizes.len());
    for &k in &cfg.batch_sizes {
        if k == 0 {
            return Err(ThreatError::BadConfig("batch size 0".into()));
        }
        let mut counts = Vec::with_capacity(probes.len());
        let mut probe_idx = 0usize;
        for (subject, phis) in &probes {
            let mut successes = 0usize;
            for phi in phis {
                let order = &orders[probe_idx];
                probe_idx += 1;
                let take = k.min(order.len());
                let fused: f64 = order[..take]
                    .iter()
                    .map(|&e| l2_distance(phi, &enrolled[e]))
                    .sum::<f64>()
                    / take as f64;
                if fused < cfg.threshold {
                    successes += 1;
                }
            }
            counts.push((subject.clone(), phis.len(), successes));
        }
        reports.push(AttackReport::from_counts(
            AttackScenario {
                kind: AttackKind::Passive,
                defense: None,
                denoiser: None,
                batch_fusion_size: k,
                trials: 0, // filled from counts
                seed: cfg.seed,
            },
            counts,
            None,
        ));
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayAttackConfig {
    /// Noise the device injects into what the capturing app saw.
    pub defense: Option<NoiseSpec>,
    /// The attacker's cleanup pass before replaying.
    pub denoiser: Option<Denoiser>,
    pub threshold: f64,
    pub fusion_count: usize,
    pub stft: StftConfig,
    pub seed: u64,
}

impl Default for ReplayAttackConfig {
    fn default() -> Self {
        Self {
            defense: None,
            denoiser: None,
            threshold: 0.75,
            fusion_count: 8,
            stft: StftConfig::default(),
            seed: 0,
        }
    }
}

/// Replay a captured trace against the enrollment. The capture goes through
/// the defense (what the malicious app actually recorded), then the
/// attacker's optional denoiser, then the standard imaging pipeline.
pub fn replay_attack(
    model: &SiameseModel,
    enrolled: &[Vec<f64>],
    captured: &SensorTrace,
    cfg: &ReplayAttackConfig,
) -> Result<AttackReport, ThreatError> {
    if enrolled.is_empty() {
        return Err(FusionError::EmptyEnrollment.into());
    }
    let treated = match &cfg.defense {
        Some(spec) => inject_noise(captured, spec),
        None => captured.clone(),
    };
    let replayed = match &cfg.denoiser {
        Some(d) => d.apply_trace(&treated),
        None => treated.clone(),
    };
    // Usability is the device's concern: what legitimate apps lose to the
    // injected noise, before any attacker processing.
    let usability = cfg
        .defense
        .as_ref()
        .map(|_| pedometer_error(captured, &treated));

    let mut pool = SamplePool::new();
    let ids = pool.add_trace(&replayed, &cfg.stft, SampleOrigin::Genuine)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut successes = 0usize;
    for &id in &ids {
        let phi = model
            .embed_only(&pool.image(id).to_input())
            .map_err(MetricError::from)?
            .into_vec();
        let d = crate::fusion::spatial_distance(&phi, enrolled, cfg.fusion_count, &mut rng)?;
        if d < cfg.threshold {
            successes += 1;
        }
    }
    Ok(AttackReport::from_counts(
        AttackScenario {
            kind: AttackKind::Replay,
            defense: cfg.defense.clone(),
            denoiser: cfg.denoiser.clone(),
            batch_fusion_size: cfg.fusion_count,
            trials: 0,
            seed: cfg.seed,
        },
        vec![(captured.subject_id.clone(), ids.len(), successes)],
        usability,
    ))
}

/// The cleanup attempts a determined attacker would sweep.
pub fn denoiser_grid() -> Vec<Denoiser> {
    vec![
        Denoiser::Tv { lambda: 0.1 },
        Denoiser::Tv { lambda: 0.5 },
        Denoiser::Tv { lambda: 1.0 },
        Denoiser::GaussianFilter { sigma: 2.0 },
        Denoiser::GaussianFilter { sigma: 5.0 },
        Denoiser::GaussianFilter { sigma: 10.0 },
    ]
}

/// The strongest replay: raw capture plus every grid denoiser, keeping the
/// variant with the highest success ratio. The winning choice is visible in
/// the returned scenario.
pub fn best_replay_attack(
    model: &SiameseModel,
    enrolled: &[Vec<f64>],
    captured: &SensorTrace,
    cfg: &ReplayAttackConfig,
) -> Result<AttackReport, ThreatError> {
    let mut best: Option<AttackReport> = None;
    for denoiser in std::iter::once(None).chain(denoiser_grid().into_iter().map(Some)) {
        let attempt = ReplayAttackConfig {
            denoiser,
            ..cfg.clone()
        };
        let report = replay_attack(model, enrolled, captured, &attempt)?;
        if best
            .as_ref()
            .is_none_or(|b| report.success_ratio > b.success_ratio)
        {
            best = Some(report);
        }
    }
    Ok(best.expect("at least the raw replay ran"))
}

/// The defended buffer: the usual genuine positives and cross-subject
/// negatives, plus dissimilar pairs teaching the model that noised (and
/// attacker-denoised) copies of a walker are not that walker. Defense
/// imagery derives only from the training span of each trace, so held-out
/// segments stay unseen.
pub fn defended_training_buffer(
    cohort: &mut Cohort,
    noise_specs: &[NoiseSpec],
    denoisers: &[Denoiser],
    capacity: usize,
    seed: u64,
    stft: &StftConfig,
) -> Result<ReservoirBuffer, ThreatError> {
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
    for i in 0..cohort.train_ids.len() {
        let span = train_span(&cohort.traces[i], stft, cohort.train_ids[i].len());
        let defense = make_defense_pairs(
            &mut cohort.pool,
            &span,
            &cohort.train_ids[i],
            stft,
            noise_specs,
            denoisers,
        )?;
        buf.admit_negatives(defense);
    }
    Ok(buf)
}

/// The prefix of a trace that produced exactly the first `n_images` segments.
fn train_span(trace: &SensorTrace, cfg: &StftConfig, n_images: usize) -> SensorTrace {
    let needed = cfg.image_stride() * (n_images - 1) + cfg.samples_per_image();
    SensorTrace::new(
        trace.sample_rate,
        trace.samples[..needed].to_vec(),
        trace.subject_id.clone(),
    )
}

/// Mean step-count error the defense inflicts on legitimate consumers of
/// the obfuscated stream, with the per-subject breakdown.
pub fn defense_usability(
    traces: &[SensorTrace],
    spec: &NoiseSpec,
) -> Vec<(String, f64)> {
    traces
        .iter()
        .map(|t| {
            let noised = inject_noise(t, spec);
            (t.subject_id.clone(), pedometer_error(t, &noised))
        })
        .collect()
}
