use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gaitauth::metric::{
    train, transfer_init, LossConfig, LossMode, SiameseModel, TrainConfig,
};
use gaitauth::nn::lenet4;
use gaitauth::pairing::SampleOrigin;
use gaitauth::pipeline::{
    acceptance_rate, build_cohort, drifted_cohort, enroll, evaluate_verifier, resume_training,
    subject_seed, train_verifier, Cohort, CohortConfig, VerifierConfig,
};
use gaitauth::signal::{NoiseSpec, StftConfig, SyntheticSubjectSpec};
use gaitauth::threat::{
    best_replay_attack, defended_training_buffer, denoiser_grid, passive_attack, replay_attack,
    PassiveAttackConfig, ReplayAttackConfig,
};

const BASE: &str = "/tmp/cal_base.gfck";

fn base_recipe() -> VerifierConfig {
    VerifierConfig {
        train: TrainConfig { epochs: 15, seed: 10, ..Default::default() },
        ..Default::default()
    }
}

fn load_base() -> SiameseModel {
    SiameseModel::load_file(Path::new(BASE)).expect("run cal_a first")
}

#[test]
fn cal_a_base_eval_passive_drift() {
    let cohort = build_cohort(&CohortConfig::default()).unwrap();
    let t0 = Instant::now();
    let base = train_verifier(&cohort, &lenet4(), &base_recipe()).unwrap();
    println!(
        "[c5] {} epochs, {:.0} s, loss {:.4}",
        base.history.len(),
        t0.elapsed().as_secs_f64(),
        base.history.last().unwrap().loss
    );
    base.model.save_file(Path::new(BASE)).unwrap();
    let rep = evaluate_verifier(&base.model, &cohort, 0.75).unwrap();
    println!("[c5] mAP {:.3} EER {:.3} at thr {:.3}", rep.map, rep.eer, rep.eer_threshold);
    let thr = rep.eer_threshold;

    // c7 passive at the operating threshold
    let victim = 0usize;
    let enrolled = enroll(&base.model, &cohort.pool, &cohort.train_ids[victim]).unwrap();
    let pcfg = PassiveAttackConfig { threshold: thr, seed: 600, ..Default::default() };
    for r in passive_attack(&base.model, &enrolled, &pcfg).unwrap() {
        println!("[c7] k={} success {:.3}", r.scenario.batch_fusion_size, r.success_ratio);
    }

    // c6 undefended replay at the operating threshold
    let rcfg = ReplayAttackConfig { threshold: thr, ..Default::default() };
    let raw = replay_attack(&base.model, &enrolled, &cohort.traces[victim], &rcfg).unwrap();
    println!("[c6] undefended replay {:.3} at thr {:.3}", raw.success_ratio, thr);

    // base genuine acceptance at the operating threshold
    let mut acc = 0.0;
    for i in 0..8 {
        let eb = enroll(&base.model, &cohort.pool, &cohort.train_ids[i]).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(900 + i as u64);
        acc += acceptance_rate(&base.model, &eb, &cohort.pool, &cohort.test_ids[i], thr, 8, &mut r)
            .unwrap();
    }
    println!("[c6] genuine acceptance base {:.3} at thr {:.3}", acc / 8.0, thr);

    // c9 untreated acceptance per drift severity at the operating threshold
    for sev in [1.0, 1.5] {
        let s2 = drifted_cohort(&cohort, &CohortConfig::default(), sev, 99).unwrap();
        let mut untreated = 0.0;
        for i in 0..8 {
            let eb = enroll(&base.model, &cohort.pool, &cohort.train_ids[i]).unwrap();
            let all: Vec<usize> =
                s2.train_ids[i].iter().chain(&s2.test_ids[i]).copied().collect();
            let ft_n = (all.len() as f64 * 0.2).ceil() as usize;
            let probes = &all[ft_n..];
            let mut r = ChaCha8Rng::seed_from_u64(1700 + i as u64);
            untreated +=
                acceptance_rate(&base.model, &eb, &s2.pool, probes, thr, 8, &mut r).unwrap();
        }
        println!("[c9 sev {sev}] untreated {:.3} at thr {:.3}", untreated / 8.0, thr);
    }
}

#[test]
fn cal_b_defended() {
    let stft = StftConfig::default();
    let cohort = build_cohort(&CohortConfig::default()).unwrap();
    let base = load_base();
    let thr_base = evaluate_verifier(&base, &cohort, 0.75).unwrap().eer_threshold;

    let defense = NoiseSpec::gaussian(0.5, 50.0, 4242);
    let mut dc = cohort.clone();
    let dbuf =
        defended_training_buffer(&mut dc, &[defense], &denoiser_grid(), 128, 2, &stft).unwrap();
    let n_def = dbuf
        .negatives()
        .iter()
        .filter(|r| dc.pool.origin(r.right) != SampleOrigin::Genuine)
        .count();
    println!("[c6] defended buffer {} defense negatives", n_def);
    let mut dmodel = SiameseModel::from_arch(&lenet4(), 0, true).unwrap();
    let t = Instant::now();
    let dh = train(&mut dmodel, &dc.pool, &dbuf, &base_recipe().train).unwrap();
    println!(
        "[c6] defended train {:.0} s loss {:.4}",
        t.elapsed().as_secs_f64(),
        dh.last().unwrap().loss
    );
    let drep = evaluate_verifier(&dmodel, &cohort, 0.75).unwrap();
    let thr_def = drep.eer_threshold;
    println!("[c6] defended mAP {:.3} EER {:.3} at thr {:.3}", drep.map, drep.eer, thr_def);

    let victim = 0usize;
    let captured = &cohort.traces[victim];
    let denrolled = enroll(&dmodel, &dc.pool, &dc.train_ids[victim]).unwrap();
    for thr in [thr_base, thr_def] {
        let datk =
            ReplayAttackConfig { defense: Some(defense), threshold: thr, ..Default::default() };
        let best = best_replay_attack(&dmodel, &denrolled, captured, &datk).unwrap();
        println!(
            "[c6] defended best replay {:.3} via {:?} at thr {:.3}",
            best.success_ratio, best.scenario.denoiser, thr
        );
    }
    let mut acc = 0.0;
    for i in 0..8 {
        let ed = enroll(&dmodel, &dc.pool, &dc.train_ids[i]).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(900 + i as u64);
        acc += acceptance_rate(&dmodel, &ed, &dc.pool, &cohort.test_ids[i], thr_def, 8, &mut r)
            .unwrap();
    }
    println!("[c6] genuine acceptance defended {:.3} at thr {:.3}", acc / 8.0, thr_def);
}

#[test]
fn cal_c_finetune() {
    let cohort = build_cohort(&CohortConfig::default()).unwrap();
    let base = load_base();
    let thr = evaluate_verifier(&base, &cohort, 0.75).unwrap().eer_threshold;

    let sev = 1.5;
    let s2 = drifted_cohort(&cohort, &CohortConfig::default(), sev, 99).unwrap();
    let mut ft_cohort = s2.clone();
    for i in 0..8 {
        let all: Vec<usize> = s2.train_ids[i].iter().chain(&s2.test_ids[i]).copied().collect();
        let ft_n = (all.len() as f64 * 0.2).ceil() as usize;
        ft_cohort.train_ids[i] = all[..ft_n].to_vec();
        ft_cohort.test_ids[i] = all[ft_n..].to_vec();
    }
    let mut tuned = base.clone();
    let ft_cfg = VerifierConfig {
        train: TrainConfig { epochs: 20, learning_rate: 0.005, seed: 11, ..Default::default() },
        reservoir_capacity: 64,
        buffer_seed: 3,
        model_seed: 0,
    };
    let t = Instant::now();
    let fh = resume_training(&mut tuned, &ft_cohort, &ft_cfg).unwrap();
    println!(
        "[c9] fine-tune {:.0} s loss {:.4}",
        t.elapsed().as_secs_f64(),
        fh.last().unwrap().loss
    );
    let mut treated = 0.0;
    for i in 0..8 {
        let et = enroll(&tuned, &s2.pool, &ft_cohort.train_ids[i]).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(1700 + i as u64);
        treated +=
            acceptance_rate(&tuned, &et, &s2.pool, &ft_cohort.test_ids[i], thr, 8, &mut r)
                .unwrap();
    }
    println!("[c9] treated {:.3} at thr {:.3}", treated / 8.0, thr);
}

#[test]
fn cal_e_operating_point() {
    let stft = StftConfig::default();
    let cohort = build_cohort(&CohortConfig::default()).unwrap();
    let base = load_base();
    let victim = 0usize;
    let enrolled = enroll(&base, &cohort.pool, &cohort.train_ids[victim]).unwrap();

    for thr in [0.9, 1.0, 1.1] {
        let pcfg = PassiveAttackConfig { threshold: thr, seed: 600, ..Default::default() };
        let ratios: Vec<f64> = passive_attack(&base, &enrolled, &pcfg)
            .unwrap()
            .into_iter()
            .map(|r| r.success_ratio)
            .collect();
        println!("[e thr {thr}] passive {ratios:?}");
        let mut acc = 0.0;
        for i in 0..8 {
            let eb = enroll(&base, &cohort.pool, &cohort.train_ids[i]).unwrap();
            let mut r = ChaCha8Rng::seed_from_u64(900 + i as u64);
            acc += acceptance_rate(&base, &eb, &cohort.pool, &cohort.test_ids[i], thr, 8, &mut r)
                .unwrap();
        }
        println!("[e thr {thr}] genuine base {:.3}", acc / 8.0);
        let s2 = drifted_cohort(&cohort, &CohortConfig::default(), 1.5, 99).unwrap();
        let mut untreated = 0.0;
        for i in 0..8 {
            let eb = enroll(&base, &cohort.pool, &cohort.train_ids[i]).unwrap();
            let all: Vec<usize> =
                s2.train_ids[i].iter().chain(&s2.test_ids[i]).copied().collect();
            let ft_n = (all.len() as f64 * 0.2).ceil() as usize;
            let mut r = ChaCha8Rng::seed_from_u64(1700 + i as u64);
            untreated +=
                acceptance_rate(&base, &eb, &s2.pool, &all[ft_n..], thr, 8, &mut r).unwrap();
        }
        println!("[e thr {thr}] untreated sev1.5 {:.3}", untreated / 8.0);
    }

    // Fine-tune once, measure treated acceptance at each candidate threshold.
    let s2 = drifted_cohort(&cohort, &CohortConfig::default(), 1.5, 99).unwrap();
    let mut ft = s2.clone();
    for i in 0..8 {
        let all: Vec<usize> = s2.train_ids[i].iter().chain(&s2.test_ids[i]).copied().collect();
        let ft_n = (all.len() as f64 * 0.2).ceil() as usize;
        ft.train_ids[i] = all[..ft_n].to_vec();
        ft.test_ids[i] = all[ft_n..].to_vec();
    }
    let mut tuned = base.clone();
    let ft_cfg = VerifierConfig {
        train: TrainConfig { epochs: 20, learning_rate: 0.005, seed: 11, ..Default::default() },
        reservoir_capacity: 64,
        buffer_seed: 3,
        model_seed: 0,
    };
    let fh = resume_training(&mut tuned, &ft, &ft_cfg).unwrap();
    println!("[e] fine-tune loss {:.4}", fh.last().unwrap().loss);
    for thr in [0.9, 1.0, 1.1] {
        let mut treated = 0.0;
        for i in 0..8 {
            let et = enroll(&tuned, &s2.pool, &ft.train_ids[i]).unwrap();
            let mut r = ChaCha8Rng::seed_from_u64(1700 + i as u64);
            treated +=
                acceptance_rate(&tuned, &et, &s2.pool, &ft.test_ids[i], thr, 8, &mut r).unwrap();
        }
        println!("[e thr {thr}] treated {:.3}", treated / 8.0);
    }

    // Defended arm at the candidate thresholds.
    let defense = NoiseSpec::gaussian(0.5, 50.0, 4242);
    let mut dc = cohort.clone();
    let dbuf =
        defended_training_buffer(&mut dc, &[defense], &denoiser_grid(), 128, 2, &stft).unwrap();
    let mut dmodel = SiameseModel::from_arch(&lenet4(), 0, true).unwrap();
    train(&mut dmodel, &dc.pool, &dbuf, &base_recipe().train).unwrap();
    let denrolled = enroll(&dmodel, &dc.pool, &dc.train_ids[victim]).unwrap();
    for thr in [0.9, 1.0, 1.1] {
        let datk =
            ReplayAttackConfig { defense: Some(defense), threshold: thr, ..Default::default() };
        let best = best_replay_attack(&dmodel, &denrolled, &cohort.traces[victim], &datk).unwrap();
        let mut acc = 0.0;
        for i in 0..8 {
            let ed = enroll(&dmodel, &dc.pool, &dc.train_ids[i]).unwrap();
            let mut r = ChaCha8Rng::seed_from_u64(900 + i as u64);
            acc += acceptance_rate(&dmodel, &ed, &dc.pool, &cohort.test_ids[i], thr, 8, &mut r)
                .unwrap();
        }
        println!(
            "[e thr {thr}] defended replay {:.3} via {:?}, genuine defended {:.3}",
            best.success_ratio,
            best.scenario.denoiser,
            acc / 8.0
        );
    }
}

/// A fresh mini cohort with sensor noise scaled up; mirrors the pipeline's
/// internal rendering (60 s traces, tail holdout of 3).
fn noisy_cohort(noise_mult: f64) -> Cohort {
    use gaitauth::pairing::{SampleOrigin, SamplePool};
    use gaitauth::signal::synth_gait;
    let stft = StftConfig::default();
    let mut pool = SamplePool::new();
    let mut specs = Vec::new();
    let mut traces = Vec::new();
    let mut train_ids = Vec::new();
    let mut test_ids = Vec::new();
    for i in 0..3 {
        let mut spec =
            SyntheticSubjectSpec::random(format!("h{i:02}"), subject_seed(500, i));
        spec.noise_std *= noise_mult;
        let trace = synth_gait(&spec, 60.0, 50.0);
        let ids = pool.add_trace(&trace, &stft, SampleOrigin::Genuine).unwrap();
        let cut = ids.len() - 3;
        train_ids.push(ids[..cut].to_vec());
        test_ids.push(ids[cut..].to_vec());
        specs.push(spec);
        traces.push(trace);
    }
    Cohort { specs, traces, pool, train_ids, test_ids }
}

#[test]
fn cal_k_passive_at_op_threshold() {
    let cohort = build_cohort(&CohortConfig::default()).unwrap();
    let base = load_base();
    let enrolled = enroll(&base, &cohort.pool, &cohort.train_ids[0]).unwrap();
    for thr in [0.85, 0.9] {
        let pcfg = PassiveAttackConfig { threshold: thr, seed: 600, ..Default::default() };
        let ratios: Vec<f64> = passive_attack(&base, &enrolled, &pcfg)
            .unwrap()
            .into_iter()
            .map(|r| r.success_ratio)
            .collect();
        println!("\n{{k}} thr {thr}: passive {ratios:?}");
    }
}

#[test]
fn cal_j_c8_final_design() {
    // Source-scale comparator: joint loss on the default cohort, trained
    // from scratch to 0.05.
    let cohort = build_cohort(&CohortConfig::default()).unwrap();
    let cfg = VerifierConfig {
        train: TrainConfig {
            epochs: 200,
            target_loss: Some(0.05),
            seed: 10,
            ..Default::default()
        },
        ..Default::default()
    };
    let s = train_verifier(&cohort, &lenet4(), &cfg).unwrap();
    let wall = s.history.iter().map(|e| e.wall_ms).sum::<f64>() / s.history.len() as f64;
    println!(
        "{{j}} source-scale scratch: {} epochs to {:.4}, {:.2} s/epoch",
        s.history.len(),
        s.history.last().unwrap().loss,
        wall / 1e3
    );

    let base = load_base();
    let contrastive = LossConfig { mode: LossMode::Contrastive, ..Default::default() };
    let mini = build_cohort(&CohortConfig {
        subjects: 3,
        duration_s: 60.0,
        holdout: 3,
        seed: 500,
        ..Default::default()
    })
    .unwrap();
    for lr in [0.05, 0.1] {
        let fcfg = VerifierConfig {
            train: TrainConfig {
                loss: contrastive,
                epochs: 150,
                learning_rate: lr,
                target_loss: Some(0.05),
                seed: 30,
                ..Default::default()
            },
            reservoir_capacity: 64,
            buffer_seed: 31,
            model_seed: 32,
        };
        let sc = train_verifier(&mini, &lenet4(), &fcfg).unwrap();
        let sw = sc.history.iter().map(|e| e.wall_ms).sum::<f64>() / sc.history.len() as f64;
        let sm = evaluate_verifier(&sc.model, &mini, 0.75).unwrap().map;
        let mut tm = transfer_init(&lenet4(), &base, 3, 33, false).unwrap();
        let th = resume_training(&mut tm, &mini, &fcfg).unwrap();
        let tw = th.iter().map(|e| e.wall_ms).sum::<f64>() / th.len() as f64;
        let tmap = evaluate_verifier(&tm, &mini, 0.75).unwrap().map;
        println!(
            "{{j}} fresh lr {lr}: k0 {} ep {:.2} s/ep mAP {:.3} | k3 {} ep {:.2} s/ep mAP {:.3}",
            sc.history.len(),
            sw / 1e3,
            sm,
            th.len(),
            tw / 1e3,
            tmap
        );
    }
}

#[test]
fn cal_h_hard_data_transfer() {
    let base = load_base();
    let contrastive = LossConfig { mode: LossMode::Contrastive, ..Default::default() };
    for noise_mult in [4.0, 8.0, 12.0] {
        let mini = noisy_cohort(noise_mult);
        for lr in [0.05, 0.1] {
            let cfg = VerifierConfig {
                train: TrainConfig {
                    loss: contrastive,
                    epochs: 150,
                    learning_rate: lr,
                    target_loss: Some(0.05),
                    seed: 30,
                    ..Default::default()
                },
                reservoir_capacity: 64,
                buffer_seed: 31,
                model_seed: 32,
            };
            let scratch = train_verifier(&mini, &lenet4(), &cfg).unwrap();
            let s_map = evaluate_verifier(&scratch.model, &mini, 0.75).unwrap().map;
            let mut tmodel = transfer_init(&lenet4(), &base, 3, 33, false).unwrap();
            let th = resume_training(&mut tmodel, &mini, &cfg).unwrap();
            let t_map = evaluate_verifier(&tmodel, &mini, 0.75).unwrap().map;
            let s_last = scratch.history.last().unwrap().loss;
            let t_last = th.last().unwrap().loss;
            println!(
                "{{h}} noise x{noise_mult} lr {lr}: scratch {} ep (last {s_last:.3}, mAP {s_map:.3}) | transfer {} ep (last {t_last:.3}, mAP {t_map:.3})",
                scratch.history.len(),
                th.len()
            );
        }
    }
}

#[test]
fn cal_g_scratch_lr_sweep() {
    let contrastive = LossConfig { mode: LossMode::Contrastive, ..Default::default() };
    let mini = build_cohort(&CohortConfig {
        subjects: 3,
        duration_s: 60.0,
        holdout: 3,
        seed: 500,
        ..Default::default()
    })
    .unwrap();
    for lr in [0.01, 0.05, 0.1] {
        let cfg = VerifierConfig {
            train: TrainConfig {
                loss: contrastive,
                epochs: 150,
                learning_rate: lr,
                target_loss: Some(0.05),
                seed: 30,
                ..Default::default()
            },
            reservoir_capacity: 64,
            buffer_seed: 31,
            model_seed: 32,
        };
        let out = train_verifier(&mini, &lenet4(), &cfg);
        match out {
            Ok(s) => {
                let head: String = s
                    .history
                    .iter()
                    .take(40)
                    .map(|e| format!("{:.3}", e.loss))
                    .collect::<Vec<_>>()
                    .join(" ");
                let wall =
                    s.history.iter().map(|e| e.wall_ms).sum::<f64>() / s.history.len() as f64;
                let map = evaluate_verifier(&s.model, &mini, 0.75).unwrap().map;
                println!(
                    "{{g}} scratch lr {lr}: {} epochs, {:.2} s/epoch, mAP {map:.3} | {head}",
                    s.history.len(),
                    wall / 1e3
                );
            }
            Err(e) => println!("{{g}} scratch lr {lr}: ERROR {e}"),
        }
    }
}

#[test]
fn cal_f_transfer_dynamics() {
    let base = load_base();
    let contrastive = LossConfig { mode: LossMode::Contrastive, ..Default::default() };
    let mini = build_cohort(&CohortConfig {
        subjects: 3,
        duration_s: 60.0,
        holdout: 3,
        seed: 500,
        ..Default::default()
    })
    .unwrap();
    let fmt = |h: &[gaitauth::metric::EpochStat]| -> String {
        h.iter()
            .take(40)
            .map(|e| format!("{:.3}", e.loss))
            .collect::<Vec<_>>()
            .join(" ")
    };

    let scfg = VerifierConfig {
        train: TrainConfig {
            loss: contrastive,
            epochs: 150,
            target_loss: Some(0.05),
            seed: 30,
            ..Default::default()
        },
        reservoir_capacity: 64,
        buffer_seed: 31,
        model_seed: 32,
    };
    let scratch = train_verifier(&mini, &lenet4(), &scfg).unwrap();
    println!("[f] scratch lr 0.01: {} epochs | {}", scratch.history.len(), fmt(&scratch.history));

    for lr in [0.01, 0.05, 0.1] {
        let mut cfg = scfg.clone();
        cfg.train.learning_rate = lr;
        let mut tmodel = transfer_init(&lenet4(), &base, 3, 33, false).unwrap();
        let th = resume_training(&mut tmodel, &mini, &cfg).unwrap();
        println!("[f] transfer lr {lr}: {} epochs | {}", th.len(), fmt(&th));
    }
}

#[test]
fn cal_d_transfer() {
    let base = load_base();
    let contrastive = LossConfig { mode: LossMode::Contrastive, ..Default::default() };
    for (subjects, seed) in [(3usize, 500u64), (4, 700)] {
        let mini = build_cohort(&CohortConfig {
            subjects,
            duration_s: 60.0,
            holdout: 3,
            seed,
            ..Default::default()
        })
        .unwrap();
        let scfg = VerifierConfig {
            train: TrainConfig {
                loss: contrastive,
                epochs: 150,
                target_loss: Some(0.05),
                seed: 30,
                ..Default::default()
            },
            reservoir_capacity: 64,
            buffer_seed: 31,
            model_seed: 32,
        };
        let scratch = train_verifier(&mini, &lenet4(), &scfg).unwrap();
        let s_wall: f64 = scratch.history.iter().map(|e| e.wall_ms).sum::<f64>()
            / scratch.history.len() as f64;
        println!(
            "[c8 n={subjects}] scratch: {} epochs to loss {:.4}, {:.2} s/epoch",
            scratch.history.len(),
            scratch.history.last().unwrap().loss,
            s_wall / 1e3
        );
        let mut tmodel = transfer_init(&lenet4(), &base, 3, 33, false).unwrap();
        let th = resume_training(&mut tmodel, &mini, &scfg).unwrap();
        let t_wall: f64 = th.iter().map(|e| e.wall_ms).sum::<f64>() / th.len() as f64;
        println!(
            "[c8 n={subjects}] transfer: {} epochs to loss {:.4}, {:.2} s/epoch",
            th.len(),
            th.last().unwrap().loss,
            t_wall / 1e3
        );
        let rs = evaluate_verifier(&scratch.model, &mini, 0.75).unwrap();
        let rt = evaluate_verifier(&tmodel, &mini, 0.75).unwrap();
        println!("[c8 n={subjects}] mAP scratch {:.3} transfer {:.3}", rs.map, rt.map);
    }
}
