//! The seven operator commands. Artifacts land under the out directory with
//! stable names (model.gfck, history.jsonl, eval.json, …); each command
//! prints a one-line summary unless --quiet.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use gaitauth::fusion::{run_sprt, DistanceStream, SprtDecision, StreamKind};
use gaitauth::metric::{train, transfer_init, EpochStat, SiameseModel};
use gaitauth::pairing::{SampleOrigin, SamplePool};
use gaitauth::pipeline::{enroll, evaluate_verifier, resume_training, subject_seed, train_verifier};
use gaitauth::signal::{synth_gait, SyntheticSubjectSpec};
use gaitauth::tensor::Tensor;
use gaitauth::threat::{
    best_replay_attack, defended_training_buffer, defense_usability, denoiser_grid,
    passive_attack, replay_attack, PassiveAttackConfig, ReplayAttackConfig,
};

use crate::config::{DatasetKind, RunConfig, ScenarioKind};
use crate::data::load_cohort;
use crate::CliError;

fn ensure_out(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|err| CliError::Io {
        path: out.display().to_string(),
        err,
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable report");
    text.push('\n');
    fs::write(path, text).map_err(|err| CliError::Io {
        path: path.display().to_string(),
        err,
    })
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut text = String::new();
    for row in rows {
        text.push_str(&serde_json::to_string(row).expect("serializable row"));
        text.push('\n');
    }
    fs::write(path, text).map_err(|err| CliError::Io {
        path: path.display().to_string(),
        err,
    })
}

fn checkpoint_path(out: &Path, explicit: Option<PathBuf>) -> PathBuf {
    explicit.unwrap_or_else(|| out.join("model.gfck"))
}

pub fn cmd_synth(cfg: &RunConfig, out: &Path, quiet: bool) -> Result<(), CliError> {
    if cfg.dataset.kind != DatasetKind::Synthetic {
        return Err(CliError::Config(
            "synth renders synthetic walkers; set dataset.kind = \"synthetic\"".into(),
        ));
    }
    ensure_out(out)?;
    let mut entries = Vec::with_capacity(cfg.dataset.subjects);
    for i in 0..cfg.dataset.subjects {
        let seed = subject_seed(cfg.seed, i);
        let spec = SyntheticSubjectSpec::random(format!("s{i:02}"), seed);
        let trace = synth_gait(&spec, cfg.dataset.duration_s, cfg.dataset.sample_rate);
        let file = format!("trace_{}.csv", spec.subject_id);
        trace.write_csv(&out.join(&file))?;
        entries.push(json!({
            "subject_id": spec.subject_id,
            "seed": seed,
            "file": file,
            "samples": trace.len(),
        }));
    }
    write_json(
        &out.join("manifest.json"),
        &json!({
            "seed": cfg.seed,
            "sample_rate": cfg.dataset.sample_rate,
            "duration_s": cfg.dataset.duration_s,
            "subjects": entries,
        }),
    )?;
    if !quiet {
        println!("synth: {} subjects -> {}", cfg.dataset.subjects, out.display());
    }
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig, out: &Path, quiet: bool) -> Result<(), CliError> {
    ensure_out(out)?;
    let cohort = load_cohort(cfg)?;
    let trained = train_verifier(&cohort, &cfg.arch(), &cfg.verifier_config())?;
    trained.model.save_file(&out.join("model.gfck"))?;
    write_jsonl(&out.join("history.jsonl"), &trained.history)?;
    if !quiet {
        match trained.history.last() {
            Some(last) => println!(
                "train: {} epochs, final loss {:.4}, reservoir peak {} -> {}",
                trained.history.len(),
                last.loss,
                trained.buffer_peak,
                out.display()
            ),
            None => println!("train: 0 epochs (initialization only) -> {}", out.display()),
        }
    }
    Ok(())
}

pub fn cmd_eval(
    cfg: &RunConfig,
    out: &Path,
    quiet: bool,
    checkpoint: Option<PathBuf>,
) -> Result<(), CliError> {
    ensure_out(out)?;
    let model = SiameseModel::load_file(&checkpoint_path(out, checkpoint))?;
    let cohort = load_cohort(cfg)?;
    let report = evaluate_verifier(&model, &cohort, cfg.decision_threshold())?;
    write_json(&out.join("eval.json"), &report)?;
    if !quiet {
        println!(
            "eval: mAP {:.4}, EER {:.4} at threshold {:.2} ({} pos / {} neg pairs)",
            report.map, report.eer, report.eer_threshold, report.n_positive, report.n_negative
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct ArmStats {
    epochs: usize,
    final_loss: Option<f64>,
    mean_epoch_ms: f64,
}

fn arm_stats(history: &[EpochStat]) -> ArmStats {
    let epochs = history.len();
    let mean = if epochs == 0 {
        0.0
    } else {
        history.iter().map(|e| e.wall_ms).sum::<f64>() / epochs as f64
    };
    ArmStats {
        epochs,
        final_loss: history.last().map(|e| e.loss),
        mean_epoch_ms: mean,
    }
}

pub fn cmd_transfer(
    cfg: &RunConfig,
    out: &Path,
    quiet: bool,
    source: Option<PathBuf>,
) -> Result<(), CliError> {
    ensure_out(out)?;
    let src_path = source
        .or_else(|| cfg.transfer.source.clone())
        .unwrap_or_else(|| out.join("model.gfck"));
    let source_model = SiameseModel::load_file(&src_path)?;
    let cohort = load_cohort(cfg)?;
    let arch = cfg.arch();
    let mut vcfg = cfg.verifier_config();
    if vcfg.train.target_loss.is_none() {
        vcfg.train.target_loss = Some(0.05);
    }
    let mut model = transfer_init(
        &arch,
        &source_model,
        cfg.transfer.k,
        vcfg.model_seed,
        vcfg.train.loss.needs_head(),
    )?;
    let history = resume_training(&mut model, &cohort, &vcfg)?;
    model.save_file(&out.join("model.gfck"))?;
    write_jsonl(&out.join("history.jsonl"), &history)?;

    let transfer = arm_stats(&history);
    let baseline = if cfg.transfer.baseline {
        Some(arm_stats(&train_verifier(&cohort, &arch, &vcfg)?.history))
    } else {
        None
    };
    let ratio = |num: f64, den: f64| (den > 0.0).then_some(num / den);
    let report = json!({
        "k": cfg.transfer.k,
        "source": src_path.display().to_string(),
        "target_loss": vcfg.train.target_loss,
        "transfer": transfer,
        "baseline": baseline,
        "epoch_ratio": baseline
            .as_ref()
            .and_then(|b| ratio(b.epochs as f64, transfer.epochs as f64)),
        "wall_ratio": baseline
            .as_ref()
            .and_then(|b| ratio(b.mean_epoch_ms, transfer.mean_epoch_ms)),
    });
    write_json(&out.join("transfer.json"), &report)?;
    if !quiet {
        match &baseline {
            Some(b) => println!(
                "transfer: k={} reached target in {} epochs ({:.0} ms/epoch) vs {} epochs ({:.0} ms/epoch) from scratch",
                cfg.transfer.k, transfer.epochs, transfer.mean_epoch_ms, b.epochs, b.mean_epoch_ms
            ),
            None => println!(
                "transfer: k={} trained {} epochs at {:.0} ms/epoch -> {}",
                cfg.transfer.k,
                transfer.epochs,
                transfer.mean_epoch_ms,
                out.display()
            ),
        }
    }
    Ok(())
}

pub fn cmd_fuse(cfg: &RunConfig, out: &Path, quiet: bool) -> Result<(), CliError> {
    ensure_out(out)?;
    let sprt = cfg.sprt();
    let sessions = cfg.fusion.sessions;
    let mut lines = Vec::with_capacity(2 * sessions);
    let mut accepted = [0usize; 2];
    let mut observations = [0usize; 2];
    for (ki, kind) in [StreamKind::Genuine, StreamKind::Imposter].into_iter().enumerate() {
        for s in 0..sessions {
            let stream = DistanceStream::new(kind, sprt, cfg.fuse_seed(ki * sessions + s));
            let outcome = run_sprt(stream, &sprt)?;
            if outcome.decision == SprtDecision::Accept {
                accepted[ki] += 1;
            }
            observations[ki] += outcome.observations;
            lines.push(json!({
                "kind": match kind { StreamKind::Genuine => "genuine", StreamKind::Imposter => "imposter" },
                "session": s,
                "decision": outcome.decision,
                "observations": outcome.observations,
                "final_ratio": outcome.final_ratio,
                "truncated": outcome.truncated,
            }));
        }
    }
    write_jsonl(&out.join("fuse.jsonl"), &lines)?;
    let n = sessions as f64;
    let summary = json!({
        "sessions_per_kind": sessions,
        "false_reject_rate": (sessions - accepted[0]) as f64 / n,
        "false_accept_rate": accepted[1] as f64 / n,
        "mean_observations_genuine": observations[0] as f64 / n,
        "mean_observations_imposter": observations[1] as f64 / n,
        "config": sprt,
    });
    write_json(&out.join("fuse.json"), &summary)?;
    if !quiet {
        println!(
            "fuse: {} sessions/kind, FR {:.3}, FA {:.3}, mean obs {:.2} genuine / {:.2} imposter",
            sessions,
            (sessions - accepted[0]) as f64 / n,
            accepted[1] as f64 / n,
            observations[0] as f64 / n,
            observations[1] as f64 / n,
        );
    }
    Ok(())
}

pub fn cmd_attack(
    cfg: &RunConfig,
    out: &Path,
    quiet: bool,
    checkpoint: Option<PathBuf>,
) -> Result<(), CliError> {
    ensure_out(out)?;
    let model = SiameseModel::load_file(&checkpoint_path(out, checkpoint))?;
    let cohort = load_cohort(cfg)?;
    let victim = cfg.threat.victim;
    if victim >= cohort.train_ids.len() {
        return Err(CliError::Config(format!(
            "threat.victim {} out of range for a {}-subject dataset",
            victim,
            cohort.train_ids.len()
        )));
    }
    let threshold = cfg.decision_threshold();
    let enrolled = enroll(&model, &cohort.pool, &cohort.train_ids[victim])?;

    let passive = match cfg.threat.scenario {
        ScenarioKind::Passive | ScenarioKind::Both => {
            let pcfg = PassiveAttackConfig {
                attackers: cfg.threat.attackers,
                duration_s: cfg.threat.attacker_duration_s,
                sample_rate: cfg.dataset.sample_rate,
                stft: cfg.stft(),
                threshold,
                batch_sizes: cfg.threat.batch_sizes.clone(),
                seed: cfg.threat_seed(),
            };
            Some(passive_attack(&model, &enrolled, &pcfg)?)
        }
        ScenarioKind::Replay => None,
    };

    let replay = match cfg.threat.scenario {
        ScenarioKind::Replay | ScenarioKind::Both => {
            let captured = &cohort.traces[victim];
            let defense = cfg.defense_spec();
            let base_rcfg = ReplayAttackConfig {
                defense: None,
                denoiser: None,
                threshold,
                fusion_count: cfg.fusion.fusion_count,
                stft: cfg.stft(),
                seed: subject_seed(cfg.threat_seed(), 1),
            };
            let undefended = replay_attack(&model, &enrolled, captured, &base_rcfg)?;
            let defended = match (&defense, cfg.threat.defended_retrain) {
                (Some(spec), true) => {
                    let mut dc = cohort.clone();
                    let vcfg = cfg.verifier_config();
                    let denoisers = if cfg.threat.sweep_denoisers {
                        denoiser_grid()
                    } else {
                        Vec::new()
                    };
                    let dbuf = defended_training_buffer(
                        &mut dc,
                        std::slice::from_ref(spec),
                        &denoisers,
                        vcfg.reservoir_capacity,
                        vcfg.buffer_seed,
                        &cfg.stft(),
                    )?;
                    let mut dmodel = SiameseModel::from_arch(
                        &cfg.arch(),
                        vcfg.model_seed ^ 1,
                        vcfg.train.loss.needs_head(),
                    )?;
                    train(&mut dmodel, &dc.pool, &dbuf, &vcfg.train)?;
                    let denrolled = enroll(&dmodel, &dc.pool, &dc.train_ids[victim])?;
                    let rcfg = ReplayAttackConfig {
                        defense: Some(*spec),
                        ..base_rcfg.clone()
                    };
                    Some(if cfg.threat.sweep_denoisers {
                        best_replay_attack(&dmodel, &denrolled, captured, &rcfg)?
                    } else {
                        replay_attack(&dmodel, &denrolled, captured, &rcfg)?
                    })
                }
                _ => None,
            };
            let usability = defense.as_ref().map(|s| defense_usability(&cohort.traces, s));
            Some(json!({
                "undefended": undefended,
                "defended": defended,
                "usability": usability,
            }))
        }
        ScenarioKind::Passive => None,
    };

    write_json(
        &out.join("attack.json"),
        &json!({
            "threshold": threshold,
            "victim": cohort.pool.subject(cohort.train_ids[victim][0]),
            "passive": passive,
            "replay": replay,
        }),
    )?;
    if !quiet {
        if let Some(reports) = &passive {
            let line: Vec<String> = reports
                .iter()
                .map(|r| format!("k={} -> {:.3}", r.scenario.batch_fusion_size, r.success_ratio))
                .collect();
            println!("attack (passive): {}", line.join(", "));
        }
        if let Some(doc) = &replay {
            println!(
                "attack (replay): undefended {:.3}, defended {}",
                doc["undefended"]["success_ratio"].as_f64().unwrap_or(f64::NAN),
                doc["defended"]["success_ratio"]
                    .as_f64()
                    .map_or("n/a".to_string(), |v| format!("{v:.3}")),
            );
        }
    }
    Ok(())
}

pub fn cmd_profile(cfg: &RunConfig, out: &Path, quiet: bool) -> Result<(), CliError> {
    ensure_out(out)?;
    let arch = cfg.arch();
    let params = arch.params_report()?;
    let model = arch.build(cfg.model_seed())?;

    // One representative image rendered at the configured geometry.
    let stft = cfg.stft();
    let spec = SyntheticSubjectSpec::random("p00", subject_seed(cfg.seed, 0));
    let duration = (stft.samples_per_image() + 1) as f64 / cfg.dataset.sample_rate;
    let trace = synth_gait(&spec, duration, cfg.dataset.sample_rate);
    let mut pool = SamplePool::new();
    let ids = pool.add_trace(&trace, &stft, SampleOrigin::Genuine)?;
    let x = pool.image(ids[0]).to_input();

    let time_per = |n: usize, mut f: Box<dyn FnMut() + '_>| -> f64 {
        f(); // warm-up
        let t0 = Instant::now();
        for _ in 0..n {
            f();
        }
        t0.elapsed().as_secs_f64() * 1e3 / n as f64
    };
    let reps = 20;
    let forward_ms = time_per(reps, Box::new(|| {
        model.forward(&x).expect("profiled arch composes");
    }));
    let out_dims = model.output_dims().expect("profiled arch composes");
    let d_out = Tensor::from_vec(&out_dims.as_shape(), vec![1e-2; out_dims.elements()])
        .expect("gradient seed shape");
    let forward_backward_ms = time_per(reps, Box::new(|| {
        let (_, cache) = model.forward(&x).expect("profiled arch composes");
        model
            .backward(&cache, &d_out, false)
            .expect("gradient shapes match");
    }));

    let mut batch_rows = Vec::new();
    for &batch in &[4usize, 16, 32, 56] {
        let t0 = Instant::now();
        for _ in 0..batch {
            model.forward(&x).expect("profiled arch composes");
        }
        let total_ms = t0.elapsed().as_secs_f64() * 1e3;
        batch_rows.push(json!({
            "batch": batch,
            "total_ms": total_ms,
            "per_image_ms": total_ms / batch as f64,
        }));
    }

    let cohort = load_cohort(cfg)?;
    let mut vcfg = cfg.verifier_config();
    vcfg.train.epochs = 1;
    vcfg.train.target_loss = None;
    let trained = train_verifier(&cohort, &arch, &vcfg)?;
    let epoch_ms = trained.history.first().map(|e| e.wall_ms);

    let report = json!({
        "arch": arch.name,
        "parameters": params.total,
        "forward_ms": forward_ms,
        "forward_backward_ms": forward_backward_ms,
        "batch_inference": batch_rows,
        "epoch_ms": epoch_ms,
    });
    write_json(&out.join("profile.json"), &report)?;
    if !quiet {
        println!(
            "profile: {} ({} params), forward {:.2} ms, forward+backward {:.2} ms, epoch {}",
            arch.name,
            params.total,
            forward_ms,
            forward_backward_ms,
            epoch_ms.map_or("n/a".to_string(), |ms| format!("{:.0} ms", ms)),
        );
    }
    Ok(())
}
