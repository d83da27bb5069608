use cdfa::backbone::{Backbone, BackboneGrads, SharingMode, Table};
use cdfa::dataset::{generate_synthetic, split_per_user, CrossDomainDataset, Domain, SplitDataset, SynthConfig};
use cdfa::gain::{estimate_gain, EstimatorConfig, GainEstimator};
use cdfa::trainer::{batch_objective, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const L2: f64 = 1e-4;

fn toy(seed: u64) -> SplitDataset {
    let ds: CrossDomainDataset = generate_synthetic(&SynthConfig {
        n_users_source: 6,
        n_users_target: 6,
        overlap_fraction: 1.0,
        n_items_source: 8,
        n_items_target: 8,
        latent_dim: 3,
        interactions_per_user: 3,
        rng_seed: seed,
        ..SynthConfig::default()
    })
    .unwrap();
    split_per_user(&ds, seed)
}

/// Every training positive with one random non-positive negative.
fn samples(data: &SplitDataset, rng: &mut ChaCha8Rng) -> Vec<Sample> {
    let mut out = Vec::new();
    let mut push = |domain, pairs: &[(usize, usize)], pos_of: &dyn Fn(usize) -> Vec<usize>, n_items: usize| {
        for &(u, i) in pairs {
            let positives = pos_of(u);
            let neg = loop {
                let j = rng.gen_range(0..n_items);
                if !positives.contains(&j) {
                    break j;
                }
            };
            out.push(Sample { domain, user: u, pos: i, neg });
        }
    };
    push(Domain::Target, &data.target_train, &|u| data.target_train_items[u].clone(), 8);
    push(Domain::Source, &data.source_train, &|u| data.source_train_items[u].clone(), 8);
    out
}

fn objective(b: &Backbone, est: &GainEstimator, s: &[Sample], data: &SplitDataset, gamma: f64) -> f64 {
    let mut scratch = BackboneGrads::for_backbone(b);
    batch_objective(b, est, s, &data.dataset.groups, gamma, true, L2, &mut scratch)
        .unwrap()
        .total
}

fn check(mode: SharingMode, gamma: f64, seed: u64) -> f64 {
    let data = toy(seed);
    let b = Backbone::init(&data.dataset, 4, mode, seed).unwrap();
    let cfg = EstimatorConfig {
        hidden: vec![8, 6],
        ..EstimatorConfig::default()
    };
    let est = GainEstimator::new(4, &cfg, seed + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = samples(&data, &mut rng);

    let pairs: Vec<_> = s.iter().filter(|x| x.domain == Domain::Target).map(|x| (x.user, x.pos)).collect();
    assert!(estimate_gain(&b, &est, &pairs, &data.dataset.groups).both_groups_present());

    let mut grads = BackboneGrads::for_backbone(&b);
    let loss = batch_objective(&b, &est, &s, &data.dataset.groups, gamma, true, L2, &mut grads).unwrap();
    assert!(loss.redist > 0.0);

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for t in [Table::Users, Table::ItemsSource, Table::ItemsTarget] {
        let (rows, cols) = b.table(t).dim();
        for r in 0..rows {
            for c in 0..cols {
                let mut bp = b.clone();
                bp.table_mut(t)[[r, c]] += h;
                let mut bm = b.clone();
                bm.table_mut(t)[[r, c]] -= h;
                let fd = (objective(&bp, &est, &s, &data, gamma) - objective(&bm, &est, &s, &data, gamma)) / (2.0 * h);
                let an = grads.table(t).data[[r, c]];
                let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-7);
                worst = worst.max(rel);
            }
        }
    }
    worst
}

#[test]
fn full_objective_matches_finite_differences_shared() {
    for (gamma, seed) in [(1.0, 1), (25.0, 2)] {
        let worst = check(SharingMode::SharedUser, gamma, seed);
        assert!(worst < 1e-4, "gamma {gamma}: max relative error {worst:e}");
    }
}

#[test]
fn full_objective_matches_finite_differences_dual() {
    for (gamma, seed) in [(1.0, 3), (25.0, 4)] {
        let worst = check(SharingMode::Dual, gamma, seed);
        assert!(worst < 1e-4, "gamma {gamma}: max relative error {worst:e}");
    }
}
