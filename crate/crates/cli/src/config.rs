//! The run configuration: one TOML file covering dataset, preprocessing,
//! model, loss, training, transfer, fusion, and threat settings. Every field
//! has a default, unknown keys are rejected, and an accepted config
//! re-serializes to an equivalent canonical form.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use gaitauth::fusion::{DenomMode, SprtConfig};
use gaitauth::metric::{LossConfig, LossMode, TrainConfig};
use gaitauth::nn::{lenet4, vgg8, ArchSpec};
use gaitauth::pipeline::{subject_seed, CohortConfig, VerifierConfig};
use gaitauth::signal::{NoiseKind, NoiseSpec, StftConfig};

use crate::CliError;

/// Fixed role tags mixed into the master seed, so each consumer gets an
/// independent stream while one `seed` (or `--seed`) pins the whole run.
mod role {
    pub const MODEL: usize = 101;
    pub const BUFFER: usize = 102;
    pub const THREAT: usize = 103;
    pub const FUSE: usize = 104;
    pub const NOISE: usize = 105;
    pub const TRAIN: usize = 106;
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every seeded component derives from it unless a block
    /// pins its own.
    pub seed: u64,
    pub dataset: DatasetBlock,
    pub preprocess: PreprocessBlock,
    pub model: ModelBlock,
    pub loss: LossBlock,
    pub train: TrainBlock,
    pub transfer: TransferBlock,
    pub fusion: FusionBlock,
    pub threat: ThreatBlock,
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|err| {
            CliError::Config(format!("cannot read {}: {err}", path.display()))
        })?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|err| CliError::Config(format!("{}: {err}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.stft().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.sprt().validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.dataset.kind == DatasetKind::Csv && self.dataset.csv_paths.is_empty() {
            return Err(CliError::Config(
                "dataset.kind = \"csv\" needs at least one entry in dataset.csv_paths".into(),
            ));
        }
        if self.train.batch_size == 0 {
            return Err(CliError::Config("train.batch_size must be >= 1".into()));
        }
        if self.train.reservoir_capacity == 0 {
            return Err(CliError::Config("train.reservoir_capacity must be >= 1".into()));
        }
        if self.threat.batch_sizes.is_empty() {
            return Err(CliError::Config("threat.batch_sizes must not be empty".into()));
        }
        Ok(())
    }

    pub fn stft(&self) -> StftConfig {
        self.preprocess.to_stft()
    }

    pub fn arch(&self) -> ArchSpec {
        match self.model.arch {
            ArchKind::Lenet4 => lenet4(),
            ArchKind::Vgg8 => vgg8(),
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            mode: self.loss.mode,
            margin: self.loss.margin,
            alpha: self.loss.alpha,
        }
    }

    /// The evaluation / fused-decision threshold: half the margin unless the
    /// threat block pins one.
    pub fn decision_threshold(&self) -> f64 {
        self.threat.threshold.unwrap_or(self.loss.margin / 2.0)
    }

    pub fn cohort_config(&self) -> CohortConfig {
        CohortConfig {
            subjects: self.dataset.subjects,
            duration_s: self.dataset.duration_s,
            sample_rate: self.dataset.sample_rate,
            stft: self.stft(),
            holdout: self.dataset.holdout,
            seed: self.seed,
        }
    }

    pub fn model_seed(&self) -> u64 {
        self.model.seed.unwrap_or_else(|| subject_seed(self.seed, role::MODEL))
    }

    pub fn buffer_seed(&self) -> u64 {
        subject_seed(self.seed, role::BUFFER)
    }

    pub fn threat_seed(&self) -> u64 {
        subject_seed(self.seed, role::THREAT)
    }

    pub fn fuse_seed(&self, session: usize) -> u64 {
        subject_seed(subject_seed(self.seed, role::FUSE), session)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            loss: self.loss_config(),
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            target_loss: self.train.target_loss,
            seed: subject_seed(self.seed, role::TRAIN),
        }
    }

    pub fn verifier_config(&self) -> VerifierConfig {
        VerifierConfig {
            train: self.train_config(),
            reservoir_capacity: self.train.reservoir_capacity,
            buffer_seed: self.buffer_seed(),
            model_seed: self.model_seed(),
        }
    }

    pub fn sprt(&self) -> SprtConfig {
        SprtConfig {
            alpha: self.fusion.alpha,
            beta: self.fusion.beta,
            mean: self.fusion.mean,
            variance: self.fusion.variance,
            denom: match self.fusion.denominator {
                DenominatorKind::Variance => DenomMode::Variance,
                DenominatorKind::StdDev => DenomMode::StdDev,
            },
            max_observations: self.fusion.max_observations,
            fusion_count: self.fusion.fusion_count,
        }
    }

    /// The configured defense noise, seeded from the master seed unless the
    /// block pins its own secret.
    pub fn defense_spec(&self) -> Option<NoiseSpec> {
        let block = self.threat.defense.as_ref()?;
        Some(block.to_spec(self.dataset.sample_rate, subject_seed(self.seed, role::NOISE)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetBlock {
    pub kind: DatasetKind,
    /// Synthetic walkers to render (synthetic kind only).
    pub subjects: usize,
    pub duration_s: f64,
    pub sample_rate: f64,
    /// Images per subject held out from the tail of each trace.
    pub holdout: usize,
    /// One `t,ax,ay,az` file per subject (csv kind only).
    pub csv_paths: Vec<PathBuf>,
    /// Resample ingested CSVs onto `sample_rate`; off keeps native rates.
    pub resample: bool,
}

impl Default for DatasetBlock {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Synthetic,
            subjects: 8,
            duration_s: 120.0,
            sample_rate: 50.0,
            holdout: 5,
            csv_paths: Vec::new(),
            resample: true,
        }
    }
}

/// Mirrors the STFT geometry so unknown keys are rejected at the config
/// boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessBlock {
    pub window_len: usize,
    pub hop: usize,
    pub fft_len: usize,
    pub freq_bins_kept: usize,
    pub frames_kept: usize,
    pub log_floor: f64,
}

impl Default for PreprocessBlock {
    fn default() -> Self {
        let s = StftConfig::default();
        Self {
            window_len: s.window_len,
            hop: s.hop,
            fft_len: s.fft_len,
            freq_bins_kept: s.freq_bins_kept,
            frames_kept: s.frames_kept,
            log_floor: s.log_floor,
        }
    }
}

impl PreprocessBlock {
    pub fn to_stft(&self) -> StftConfig {
        StftConfig {
            window_len: self.window_len,
            hop: self.hop,
            fft_len: self.fft_len,
            freq_bins_kept: self.freq_bins_kept,
            frames_kept: self.frames_kept,
            log_floor: self.log_floor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    Lenet4,
    Vgg8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelBlock {
    pub arch: ArchKind,
    /// Weight-init seed; derived from the master seed when absent.
    pub seed: Option<u64>,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self { arch: ArchKind::Lenet4, seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossBlock {
    pub mode: LossMode,
    pub margin: f64,
    pub alpha: f64,
}

impl Default for LossBlock {
    fn default() -> Self {
        let l = LossConfig::default();
        Self { mode: l.mode, margin: l.margin, alpha: l.alpha }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainBlock {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Reservoir capacity per label class.
    pub reservoir_capacity: usize,
    /// Stop early once the epoch mean pair loss drops below this.
    pub target_loss: Option<f64>,
}

impl Default for TrainBlock {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 20,
            learning_rate: 0.01,
            reservoir_capacity: 128,
            target_loss: Some(0.05),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferBlock {
    /// Source checkpoint; `--source` or the out-dir model wins when absent.
    pub source: Option<PathBuf>,
    /// Weight layers copied and frozen from the source.
    pub k: usize,
    /// Also train a from-scratch baseline for the side-by-side report.
    pub baseline: bool,
}

impl Default for TransferBlock {
    fn default() -> Self {
        Self { source: None, k: 3, baseline: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenominatorKind {
    Variance,
    StdDev,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionBlock {
    pub alpha: f64,
    pub beta: f64,
    pub mean: f64,
    pub variance: f64,
    pub denominator: DenominatorKind,
    pub max_observations: usize,
    pub fusion_count: usize,
    /// Simulated sessions per stream kind for `fuse`.
    pub sessions: usize,
}

impl Default for FusionBlock {
    fn default() -> Self {
        let s = SprtConfig::default();
        Self {
            alpha: s.alpha,
            beta: s.beta,
            mean: s.mean,
            variance: s.variance,
            denominator: DenominatorKind::Variance,
            max_observations: s.max_observations,
            fusion_count: s.fusion_count,
            sessions: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Passive,
    Replay,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThreatBlock {
    pub scenario: ScenarioKind,
    /// Unseen walkers probing in the passive arm.
    pub attackers: usize,
    pub attacker_duration_s: f64,
    pub batch_sizes: Vec<usize>,
    /// Fused-distance acceptance bound; half the margin when absent.
    pub threshold: Option<f64>,
    /// Cohort index whose enrollment the attacks target.
    pub victim: usize,
    pub defense: Option<NoiseBlock>,
    /// Let the replay attacker sweep the denoiser grid and keep the best.
    pub sweep_denoisers: bool,
    /// Retrain a defense-aware model for the defended replay arm.
    pub defended_retrain: bool,
}

impl Default for ThreatBlock {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::Passive,
            attackers: 50,
            attacker_duration_s: 40.0,
            batch_sizes: vec![1, 4, 8, 16, 32],
            threshold: None,
            victim: 0,
            defense: None,
            sweep_denoisers: true,
            defended_retrain: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseBlock {
    pub kind: NoiseKind,
    /// Additive kinds: noise std as a multiple of the windowed signal std.
    pub std_scale: f64,
    /// Sinusoid kind: fingerprint frequency; drawn from the seed when absent.
    pub sinusoid_freq: Option<f64>,
    pub sinusoid_amp_ratio: f64,
    /// The device's noise secret; derived from the master seed when absent.
    pub seed: Option<u64>,
}

impl Default for NoiseBlock {
    fn default() -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            std_scale: 0.5,
            sinusoid_freq: None,
            sinusoid_amp_ratio: 0.1,
            seed: None,
        }
    }
}

impl NoiseBlock {
    pub fn to_spec(&self, sample_rate: f64, fallback_seed: u64) -> NoiseSpec {
        let seed = self.seed.unwrap_or(fallback_seed);
        match self.kind {
            NoiseKind::Sinusoid => {
                let mut spec = NoiseSpec::sinusoid_fingerprint(seed);
                spec.sinusoid_amp_ratio = self.sinusoid_amp_ratio;
                if let Some(freq) = self.sinusoid_freq {
                    spec.sinusoid_freq = freq;
                }
                spec
            }
            NoiseKind::Gaussian => NoiseSpec::gaussian(self.std_scale, sample_rate, seed),
            NoiseKind::Laplacian => NoiseSpec::laplacian(self.std_scale, sample_rate, seed),
            NoiseKind::Uniform => NoiseSpec::uniform(self.std_scale, sample_rate, seed),
        }
    }
}
