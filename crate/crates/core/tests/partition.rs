use cdfa::backbone::BackboneGrads;
use cdfa::dataset::{generate_synthetic, split_per_user, Domain, SynthConfig};
use cdfa::gain::{estimator_step, EpochSnapshot};
use cdfa::seed::component_rng;
use cdfa::trainer::{batch_objective, train, train_epoch, Sample, TrainConfig, TrainState};
use rand::Rng;

fn data() -> cdfa::dataset::SplitDataset {
    let ds = generate_synthetic(&SynthConfig {
        n_users_source: 120,
        n_users_target: 120,
        n_items_source: 80,
        n_items_target: 80,
        latent_dim: 8,
        interactions_per_user: 10,
        source_disparity: 4.0,
        rng_seed: 8,
        ..SynthConfig::default()
    })
    .unwrap();
    split_per_user(&ds, 8)
}

fn cfg() -> TrainConfig {
    TrainConfig {
        epochs: 10,
        patience: 100,
        batch_size: 256,
        learning_rate: 0.01,
        dim: 8,
        seed: 2,
        audit_partition: true,
        ..TrainConfig::default()
    }
}

#[test]
fn audited_run_checks_every_step() {
    let data = data();
    let out = train(&data, &cfg()).unwrap();
    assert_eq!(out.log.len(), 10);
    let c = out.last.counters;
    assert_eq!(c.estimator_steps, 10);
    assert!(c.train_steps >= 10);
    assert_eq!(c.partition_checks, c.train_steps + c.estimator_steps);
}

#[test]
fn audit_does_not_change_the_trajectory() {
    let data = data();
    let audited = train(&data, &cfg()).unwrap();
    let plain = train(&data, &TrainConfig { audit_partition: false, ..cfg() }).unwrap();
    assert_eq!(audited.last.backbone, plain.last.backbone);
    assert_eq!(audited.last.estimator, plain.last.estimator);
    assert_eq!(plain.last.counters.partition_checks, 0);
}

/// Serialized parameters, compared byte for byte.
fn bytes<T: serde::Serialize>(x: &T) -> Vec<u8> {
    serde_json::to_vec(x).unwrap()
}

#[test]
fn each_step_touches_only_its_own_parameters() {
    let data = data();
    let c = cfg();
    let mut state = TrainState::new(&data.dataset, &c).unwrap();
    let mut rng = component_rng(99, "partition-test");
    let n_items = data.dataset.n_items_target;
    let users: Vec<usize> = (0..data.dataset.n_users_target).filter(|&u| state.backbone.is_overlapping(u)).collect();

    for epoch in 0..10 {
        // Warm the tracker and optimizers with the real loop, then probe one
        // more step of each kind by hand.
        train_epoch(&mut state, &data, &c, None).unwrap();
        let snapshot = EpochSnapshot::take(&state.backbone);

        let samples: Vec<Sample> = data
            .target_train
            .iter()
            .map(|&(user, pos)| {
                let neg = loop {
                    let j = rng.gen_range(0..n_items);
                    if !data.target_train_items[user].contains(&j) {
                        break j;
                    }
                };
                Sample { domain: Domain::Target, user, pos, neg }
            })
            .collect();
        let est_before = bytes(&state.estimator);
        let bb_before = state.backbone.clone();
        let mut grads = BackboneGrads::for_backbone(&state.backbone);
        batch_objective(
            &state.backbone,
            &state.estimator,
            &samples,
            &data.dataset.groups,
            c.gamma,
            true,
            c.l2_reg,
            &mut grads,
        )
        .unwrap();
        state.adam.apply(&mut state.backbone, &grads).unwrap();
        assert_eq!(bytes(&state.estimator), est_before, "epoch {epoch}: train step moved the estimator");
        assert_ne!(state.backbone, bb_before);

        let bb_before = state.backbone.to_snapshot().to_bytes();
        let users_before = state.backbone.users.clone();
        let est_before = bytes(&state.estimator);
        let mut est_rng = component_rng(epoch, "est");
        estimator_step(
            &mut state.estimator,
            &snapshot,
            &state.backbone,
            &users,
            &mut state.estimator_opt,
            64,
            &mut est_rng,
        )
        .unwrap();
        assert_eq!(state.backbone.to_snapshot().to_bytes(), bb_before);
        assert_eq!(state.backbone.users, users_before, "epoch {epoch}: estimator step moved the backbone");
        assert_ne!(bytes(&state.estimator), est_before);
    }
}
