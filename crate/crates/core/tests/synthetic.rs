use cdfa::dataset::{generate_synthetic, generate_world, Group, SynthConfig, SyntheticWorld};
use statrs::distribution::{ContinuousCDF, StudentsT};

fn small(seed: u64, disparity: f64) -> SynthConfig {
    SynthConfig {
        n_users_source: 400,
        n_users_target: 400,
        n_items_source: 300,
        n_items_target: 300,
        source_disparity: disparity,
        domain_shift: 0.0,
        rng_seed: seed,
        ..SynthConfig::default()
    }
}

fn source_group(w: &SyntheticWorld, s: usize) -> Group {
    w.dataset.groups_source[s].unwrap()
}

/// Welch two-sample t-test, two-sided.
fn welch_p(a: &[f64], b: &[f64]) -> f64 {
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        (n, m, v)
    };
    let (na, ma, va) = stats(a);
    let (nb, mb, vb) = stats(b);
    let se2 = va / na + vb / nb;
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    2.0 * StudentsT::new(0.0, 1.0, df).unwrap().cdf(-t.abs())
}

/// Per-user mean clean score of the interacted source items, split by group.
fn interaction_scores(w: &SyntheticWorld) -> [Vec<f64>; 2] {
    let clean = w.source_clean_scores();
    let mut sums = vec![(0.0, 0usize); w.dataset.n_users_source];
    for &(u, i) in &w.dataset.interactions_source {
        sums[u].0 += clean[[u, i]];
        sums[u].1 += 1;
    }
    let mut out = [Vec::new(), Vec::new()];
    for (u, (s, n)) in sums.into_iter().enumerate() {
        out[source_group(w, u).index()].push(s / n as f64);
    }
    out
}

fn descending_order(row: ndarray::ArrayView1<'_, f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx
}

/// Per group, the mean position of each user's true top-k items within
/// that user's noisy ordering, and the fraction of the true top-k recovered
/// by the noisy top-k.
fn ordering_quality(w: &SyntheticWorld, k: usize) -> ([f64; 2], [f64; 2]) {
    let clean = w.source_clean_scores();
    let mut pos = [0.0; 2];
    let mut hit = [0.0; 2];
    let mut n = [0usize; 2];
    for u in 0..w.dataset.n_users_source {
        let g = source_group(w, u).index();
        let truth = &descending_order(clean.row(u))[..k];
        let noisy = descending_order(w.source_noisy_scores.row(u));
        let mut rank = vec![0usize; noisy.len()];
        for (r, &i) in noisy.iter().enumerate() {
            rank[i] = r;
        }
        pos[g] += truth.iter().map(|&i| rank[i] as f64).sum::<f64>() / k as f64;
        hit[g] += noisy[..k].iter().filter(|i| truth.contains(i)).count() as f64 / k as f64;
        n[g] += 1;
    }
    (
        [pos[0] / n[0] as f64, pos[1] / n[1] as f64],
        [hit[0] / n[0] as f64, hit[1] / n[1] as f64],
    )
}

#[test]
fn equal_noise_gives_indistinguishable_groups() {
    let mut pooled = [Vec::new(), Vec::new()];
    for seed in 0..20 {
        let w = generate_world(&small(seed, 1.0)).unwrap();
        let [a, b] = interaction_scores(&w);
        pooled[0].extend(a);
        pooled[1].extend(b);
    }
    let p = welch_p(&pooled[0], &pooled[1]);
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn unequal_noise_is_detected_by_the_same_test() {
    let mut pooled = [Vec::new(), Vec::new()];
    for seed in 0..20 {
        let w = generate_world(&small(seed, 4.0)).unwrap();
        let [a, b] = interaction_scores(&w);
        pooled[0].extend(a);
        pooled[1].extend(b);
    }
    assert!(welch_p(&pooled[0], &pooled[1]) < 0.01);
}

#[test]
fn noisier_group_ranks_its_true_items_lower() {
    for seed in 0..10 {
        let cfg = small(seed, 4.0);
        let w = generate_world(&cfg).unwrap();
        let (pos, _) = ordering_quality(&w, cfg.source_positives());
        assert!(pos[1] > pos[0], "seed {seed}: {pos:?}");
    }
}

#[test]
fn quality_gap_grows_with_disparity() {
    let mut last = f64::NEG_INFINITY;
    for disparity in [1.0, 1.5, 2.0, 4.0, 8.0] {
        let mut gap = 0.0;
        for seed in 0..10 {
            let cfg = small(seed, disparity);
            let (_, hit) = ordering_quality(&generate_world(&cfg).unwrap(), cfg.source_positives());
            gap += (hit[0] - hit[1]) / 10.0;
        }
        assert!(gap >= last, "disparity {disparity}: gap {gap} < {last}");
        last = gap;
    }
}

#[test]
fn generation_is_deterministic() {
    let cfg = SynthConfig {
        domain_shift: 0.3,
        source_disparity: 2.0,
        ..small(9, 1.0)
    };
    assert_eq!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&cfg).unwrap());
    let other = SynthConfig { rng_seed: 10, ..cfg };
    assert_ne!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&other).unwrap());
}

#[test]
fn interactions_are_the_noisy_top_items() {
    let cfg = small(3, 2.0);
    let w = generate_world(&cfg).unwrap();
    let k = cfg.source_positives();
    for u in 0..w.dataset.n_users_source {
        let mut got: Vec<usize> = w.dataset.interactions_source.iter().filter(|p| p.0 == u).map(|p| p.1).collect();
        got.sort_unstable();
        let mut want = descending_order(w.source_noisy_scores.row(u))[..k].to_vec();
        want.sort_unstable();
        assert_eq!(got, want);
    }
}
