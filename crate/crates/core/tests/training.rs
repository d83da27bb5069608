use cdfa::backbone::Backbone;
use cdfa::dataset::{generate_synthetic, split_per_user, Domain, SplitDataset, SynthConfig};
use cdfa::optim::{AdamConfig, SparseAdam};
use cdfa::sampler::{draw_negative, sample_candidates};
use cdfa::seed::component_rng;
use cdfa::trainer::{train, train_epoch, write_checkpoint, write_run_log, AblationFlags, Sample, TrainConfig, TrainState};
use rand::seq::SliceRandom;

fn dataset(seed: u64, users: usize, items: usize, ipu: usize) -> SplitDataset {
    let ds = generate_synthetic(&SynthConfig {
        n_users_source: users,
        n_users_target: users,
        n_items_source: items,
        n_items_target: items,
        latent_dim: 8,
        interactions_per_user: ipu,
        source_disparity: 4.0,
        rng_seed: seed,
        ..SynthConfig::default()
    })
    .unwrap();
    split_per_user(&ds, seed)
}

fn cfg(flags: AblationFlags) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.01,
        batch_size: 256,
        epochs: 4,
        dim: 8,
        flags,
        seed: 5,
        ..TrainConfig::default()
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn oracle_loss(b: &Backbone, s: &Sample, l2: f64) -> f64 {
    let (row, items) = match s.domain {
        Domain::Target => (b.target_row(s.user), &b.items_target),
        Domain::Source => (b.source_row(s.user), &b.items_source),
    };
    let u: Vec<f64> = b.users.row(row).to_vec();
    let p: Vec<f64> = items.row(s.pos).to_vec();
    let n: Vec<f64> = items.row(s.neg).to_vec();
    let mut x = 0.0;
    let mut sq = 0.0;
    for k in 0..u.len() {
        x += u[k] * p[k] - u[k] * n[k];
        sq += u[k] * u[k] + p[k] * p[k] + n[k] * n[k];
    }
    softplus(-x) + l2 * sq
}

/// Rebuilds the first epoch's triples from the sampling stream.
fn replay(data: &SplitDataset, c: &TrainConfig, init: &Backbone) -> Vec<Sample> {
    let mut rng = component_rng(c.seed, "train/sampling");
    let mut pool: Vec<(Domain, usize, usize)> = data.source_train.iter().map(|&(u, i)| (Domain::Source, u, i)).collect();
    pool.extend(data.target_train.iter().map(|&(u, i)| (Domain::Target, u, i)));
    pool.shuffle(&mut rng);
    pool.into_iter()
        .map(|(domain, user, pos)| {
            let neg = match domain {
                Domain::Source => {
                    sample_candidates(data.dataset.n_items_source, &data.source_train_items[user], 1, &mut rng).unwrap()[0]
                }
                Domain::Target if c.flags.use_fair_sampling => {
                    draw_negative(init, data, user, c.sampler.candidate_size, None, &mut rng).unwrap()
                }
                Domain::Target => {
                    sample_candidates(data.dataset.n_items_target, &data.target_train_items[user], 1, &mut rng).unwrap()[0]
                }
            };
            Sample { domain, user, pos, neg }
        })
        .collect()
}

#[test]
fn first_epoch_loss_matches_replayed_draws() {
    let data = dataset(1, 2, 4, 2);
    for flags in [AblationFlags::NONE, AblationFlags::FULL] {
        let c = TrainConfig { batch_size: 64, ..cfg(flags) };
        let mut state = TrainState::new(&data.dataset, &c).unwrap();
        let init = state.backbone.clone();
        let want = replay(&data, &c, &init);

        let mut trace = Vec::new();
        let stats = train_epoch(&mut state, &data, &c, Some(&mut trace)).unwrap();
        assert_eq!(trace, want);
        assert_eq!(stats.batches.len(), 1);

        let sum: f64 = want.iter().map(|s| oracle_loss(&init, s, c.l2_reg)).sum();
        assert!((stats.sample_loss_sum - sum).abs() < 1e-12 * sum.abs().max(1.0));
        assert!((stats.loss_rec - sum / want.len() as f64).abs() < 1e-12);
        assert!((stats.loss_total - stats.loss_rec - c.gamma * stats.loss_redist).abs() < 1e-12);
    }
}

#[test]
fn all_flags_off_is_plain_joint_training() {
    let data = dataset(2, 60, 50, 10);
    let out = train(&data, &cfg(AblationFlags::NONE)).unwrap();
    assert_eq!(out.last.counters.fair_sampler_calls, 0);
    assert_eq!(out.last.counters.estimator_steps, 0);
    for s in &out.stats {
        assert!(s.gain.is_none());
        assert_eq!(s.loss_redist, 0.0);
        assert_eq!(s.loss_total, s.loss_rec);
    }
}

#[test]
fn fair_sampler_runs_only_when_enabled() {
    let data = dataset(2, 60, 50, 10);
    let on = train(&data, &cfg(AblationFlags::FULL)).unwrap();
    assert!(on.last.counters.fair_sampler_calls > 0);
    let off = train(
        &data,
        &cfg(AblationFlags {
            use_fair_sampling: false,
            ..AblationFlags::FULL
        }),
    )
    .unwrap();
    assert_eq!(off.last.counters.fair_sampler_calls, 0);
}

#[test]
fn zero_gamma_equals_disabled_penalty() {
    let data = dataset(3, 60, 50, 10);
    let off = train(
        &data,
        &cfg(AblationFlags {
            use_redistribution: false,
            ..AblationFlags::FULL
        }),
    )
    .unwrap();
    let zero = train(
        &data,
        &TrainConfig {
            gamma: 0.0,
            ..cfg(AblationFlags::FULL)
        },
    )
    .unwrap();
    assert_eq!(off.last.backbone, zero.last.backbone);
    for (a, b) in off.stats.iter().zip(&zero.stats) {
        assert_eq!(a.loss_total, b.loss_total);
        assert_eq!(a.loss_rec, b.loss_rec);
    }
}

#[test]
fn estimator_loss_cannot_reach_the_backbone_without_the_penalty() {
    let data = dataset(4, 60, 50, 10);
    let base = AblationFlags {
        use_redistribution: false,
        ..AblationFlags::FULL
    };
    let with = train(&data, &cfg(base)).unwrap();
    let without = train(
        &data,
        &cfg(AblationFlags {
            use_estimator_loss: false,
            ..base
        }),
    )
    .unwrap();
    assert_eq!(with.last.backbone, without.last.backbone);
    assert_ne!(with.last.estimator, without.last.estimator);
}

#[test]
fn alpha_is_inert_without_fair_sampling() {
    let data = dataset(4, 60, 50, 10);
    let base = AblationFlags {
        use_fair_sampling: false,
        ..AblationFlags::FULL
    };
    let a = train(&data, &cfg(base)).unwrap();
    let b = train(&data, &cfg(AblationFlags { use_alpha: false, ..base })).unwrap();
    assert_eq!(a.last.backbone, b.last.backbone);
}

#[test]
fn each_component_changes_the_trajectory() {
    let data = dataset(5, 60, 50, 10);
    let full = train(&data, &cfg(AblationFlags::FULL)).unwrap();
    for flags in [
        AblationFlags { use_alpha: false, ..AblationFlags::FULL },
        AblationFlags { use_fair_sampling: false, ..AblationFlags::FULL },
        AblationFlags { use_redistribution: false, ..AblationFlags::FULL },
        AblationFlags { use_estimator_loss: false, ..AblationFlags::FULL },
    ] {
        let other = train(&data, &cfg(flags)).unwrap();
        assert_ne!(full.last.backbone, other.last.backbone, "{flags:?}");
    }
}

#[test]
fn training_is_deterministic() {
    let data = dataset(6, 60, 50, 10);
    let c = cfg(AblationFlags::FULL);
    let a = train(&data, &c).unwrap();
    let b = train(&data, &c).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.best.backbone, b.best.backbone);

    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for (dir, out) in dirs.iter().zip([&a, &b]) {
        write_run_log(&dir.path().join("log.jsonl"), &out.log).unwrap();
        write_checkpoint(dir.path(), out, &c).unwrap();
    }
    for name in ["log.jsonl", "checkpoint.cdfa", "checkpoint.json"] {
        let x = std::fs::read(dirs[0].path().join(name)).unwrap();
        let y = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }

    let other = train(&data, &TrainConfig { seed: 6, ..c }).unwrap();
    assert_ne!(a.last.backbone, other.last.backbone);
}

#[test]
fn validation_quality_improves_over_the_first_epoch() {
    for seed in 0..3 {
        let data = dataset(10 + seed, 300, 200, 20);
        let c = TrainConfig {
            seed,
            epochs: 30,
            dim: 16,
            ..TrainConfig::default()
        };
        let out = train(&data, &c).unwrap();
        let first = out.log[0].val_ndcg10.unwrap();
        assert!(out.best_val_ndcg10 > first, "seed {seed}: {} vs {first}", out.best_val_ndcg10);
    }
}

#[test]
fn untouched_rows_keep_their_values() {
    let data = dataset(7, 40, 30, 6);
    let mut b = Backbone::init(&data.dataset, 4, cdfa::backbone::SharingMode::SharedUser, 1).unwrap();
    let mut adam = SparseAdam::new(AdamConfig::with_lr(0.05), &b);
    let mut grads = cdfa::backbone::BackboneGrads::for_backbone(&b);
    for step in 0..3 {
        let touched = [step, step + 5];
        grads.clear();
        for &r in &touched {
            grads.users.add_scaled(r, 1.0, &[1.0, -1.0, 0.5, 2.0]);
            grads.items_target.add_scaled(r, 1.0, &[0.3, 0.1, -0.2, 1.0]);
        }
        let before = b.clone();
        adam.apply(&mut b, &grads).unwrap();
        for r in 0..b.users.nrows() {
            let same = b.users.row(r) == before.users.row(r);
            assert_eq!(same, !touched.contains(&r), "user row {r} at step {step}");
        }
        for r in 0..b.items_target.nrows() {
            let same = b.items_target.row(r) == before.items_target.row(r);
            assert_eq!(same, !touched.contains(&r), "item row {r} at step {step}");
        }
        assert_eq!(b.items_source, before.items_source);
    }
}
