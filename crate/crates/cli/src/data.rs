//! Dataset assembly shared by the commands: synthetic cohorts straight from
//! the pipeline, CSV cohorts via ingestion with the same tail-holdout rule.

use gaitauth::pairing::{SampleOrigin, SamplePool};
use gaitauth::pipeline::{build_cohort, Cohort};
use gaitauth::signal::ingest_csv;

use crate::config::{DatasetKind, RunConfig};
use crate::CliError;

pub fn load_cohort(cfg: &RunConfig) -> Result<Cohort, CliError> {
    match cfg.dataset.kind {
        DatasetKind::Synthetic => Ok(build_cohort(&cfg.cohort_config())?),
        DatasetKind::Csv => cohort_from_csv(cfg),
    }
}

/// One CSV file per subject. Ingested cohorts carry no generative specs, so
/// synthetic-only manipulations (drift) do not apply to them.
fn cohort_from_csv(cfg: &RunConfig) -> Result<Cohort, CliError> {
    let stft = cfg.stft();
    let resample = cfg.dataset.resample.then_some(cfg.dataset.sample_rate);
    let mut pool = SamplePool::new();
    let mut traces = Vec::new();
    let mut train_ids = Vec::new();
    let mut test_ids = Vec::new();
    for path in &cfg.dataset.csv_paths {
        let trace = ingest_csv(path, resample)?;
        let ids = pool.add_trace(&trace, &stft, SampleOrigin::Genuine)?;
        if ids.len() <= cfg.dataset.holdout {
            return Err(CliError::Data(format!(
                "{}: {} image(s) cannot cover a holdout of {}",
                trace.subject_id,
                ids.len(),
                cfg.dataset.holdout
            )));
        }
        let cut = ids.len() - cfg.dataset.holdout;
        train_ids.push(ids[..cut].to_vec());
        test_ids.push(ids[cut..].to_vec());
        traces.push(trace);
    }
    Ok(Cohort {
        specs: Vec::new(),
        traces,
        pool,
        train_ids,
        test_ids,
    })
}
