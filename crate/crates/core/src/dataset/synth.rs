//! Latent-factor generator for two-domain data with controllable group
//! disparity in the source domain.
//!
//! Every person has one latent preference vector shared by both domains.
//! Items of each domain get their own Gaussian factors; source item factors
//! are additionally pushed through `(1 - s) I + s Q` for a random rotation
//! `Q` and shift strength `s`. Positives are the top-scoring items under
//! `u.v / sqrt(d) + noise`, where the noise scale is `base_noise`, multiplied
//! by `source_disparity` for group `g1` in the source domain.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CrossDomainDataset, Group, IdMaps, Pair};
use crate::error::{Error, Result};
use crate::kv::KeyValues;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_users_source: usize,
    pub n_users_target: usize,
    /// Fraction of target users that also appear in the source domain.
    pub overlap_fraction: f64,
    pub n_items_source: usize,
    pub n_items_target: usize,
    pub latent_dim: usize,
    /// Fraction of users in group `g1`.
    pub group_split: f64,
    pub source_disparity: f64,
    pub domain_shift: f64,
    pub interactions_per_user: usize,
    /// Source-domain positives per user; defaults to `interactions_per_user`.
    pub source_interactions_per_user: Option<usize>,
    pub base_noise: f64,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_users_source: 2000,
            n_users_target: 2000,
            overlap_fraction: 0.5,
            n_items_source: 1000,
            n_items_target: 1000,
            latent_dim: 16,
            group_split: 0.5,
            source_disparity: 1.0,
            domain_shift: 0.0,
            interactions_per_user: 20,
            source_interactions_per_user: None,
            base_noise: 0.5,
            rng_seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn source_positives(&self) -> usize {
        self.source_interactions_per_user.unwrap_or(self.interactions_per_user)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_users_source", self.n_users_source),
            ("n_users_target", self.n_users_target),
            ("n_items_source", self.n_items_source),
            ("n_items_target", self.n_items_target),
            ("latent_dim", self.latent_dim),
            ("interactions_per_user", self.interactions_per_user),
            ("source_interactions_per_user", self.source_positives()),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.n_users_target < 2 {
            return Err(Error::Config("need at least two target users to form two groups".into()));
        }
        if !(0.0..=1.0).contains(&self.overlap_fraction) {
            return Err(Error::Config("overlap_fraction must lie in [0, 1]".into()));
        }
        if !(self.group_split > 0.0 && self.group_split < 1.0) {
            return Err(Error::Config("group_split must lie in (0, 1)".into()));
        }
        if !(self.source_disparity >= 1.0) {
            return Err(Error::Config("source_disparity must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.domain_shift) {
            return Err(Error::Config("domain_shift must lie in [0, 1]".into()));
        }
        if !(self.base_noise >= 0.0 && self.base_noise.is_finite()) {
            return Err(Error::Config("base_noise must be a finite non-negative number".into()));
        }
        if self.interactions_per_user > self.n_items_target {
            return Err(Error::Config(format!(
                "interactions_per_user ({}) exceeds n_items_target ({})",
                self.interactions_per_user, self.n_items_target
            )));
        }
        if self.source_positives() > self.n_items_source {
            return Err(Error::Config(format!(
                "source interactions per user ({}) exceeds n_items_source ({})",
                self.source_positives(),
                self.n_items_source
            )));
        }
        Ok(())
    }

    /// Overrides fields from `key = value` entries named exactly like the fields.
    pub fn apply_kv(&mut self, kv: &KeyValues) -> Result<()> {
        kv.apply("n_users_source", &mut self.n_users_source)?;
        kv.apply("n_users_target", &mut self.n_users_target)?;
        kv.apply("overlap_fraction", &mut self.overlap_fraction)?;
        kv.apply("n_items_source", &mut self.n_items_source)?;
        kv.apply("n_items_target", &mut self.n_items_target)?;
        if let Some(n) = kv.get::<usize>("n_items")? {
            self.n_items_source = n;
            self.n_items_target = n;
        }
        kv.apply("latent_dim", &mut self.latent_dim)?;
        kv.apply("group_split", &mut self.group_split)?;
        kv.apply("source_disparity", &mut self.source_disparity)?;
        kv.apply("domain_shift", &mut self.domain_shift)?;
        kv.apply("interactions_per_user", &mut self.interactions_per_user)?;
        if let Some(n) = kv.get::<usize>("source_interactions_per_user")? {
            self.source_interactions_per_user = Some(n);
        }
        kv.apply("base_noise", &mut self.base_noise)?;
        kv.apply("rng_seed", &mut self.rng_seed)?;
        Ok(())
    }

    fn n_overlap(&self) -> usize {
        let n = (self.overlap_fraction * self.n_users_target as f64).round() as usize;
        n.min(self.n_users_source)
    }
}

/// The generated dataset together with the latent structure behind it.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub dataset: CrossDomainDataset,
    pub person_latent: Array2<f64>,
    pub item_target: Array2<f64>,
    /// Source item factors after the domain-shift transform.
    pub item_source: Array2<f64>,
    pub target_person: Vec<usize>,
    pub source_person: Vec<usize>,
    /// Per-user noise scale used in the source domain.
    pub source_noise: Vec<f64>,
    pub target_noisy_scores: Array2<f64>,
    pub source_noisy_scores: Array2<f64>,
}

impl SyntheticWorld {
    pub fn target_clean_scores(&self) -> Array2<f64> {
        clean_scores(&self.person_latent, &self.target_person, &self.item_target)
    }

    pub fn source_clean_scores(&self) -> Array2<f64> {
        clean_scores(&self.person_latent, &self.source_person, &self.item_source)
    }
}

fn clean_scores(latent: &Array2<f64>, persons: &[usize], items: &Array2<f64>) -> Array2<f64> {
    let users = latent.select(Axis(0), persons);
    let scale = (latent.ncols() as f64).sqrt();
    users.dot(&items.t()) / scale
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<CrossDomainDataset> {
    Ok(generate_world(cfg)?.dataset)
}

pub fn generate_world(cfg: &SynthConfig) -> Result<SyntheticWorld> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let d = cfg.latent_dim;
    let n_ov = cfg.n_overlap();
    let n_persons = cfg.n_users_target + cfg.n_users_source - n_ov;

    let target_person: Vec<usize> = (0..cfg.n_users_target).collect();
    let source_person: Vec<usize> = (0..cfg.n_users_source)
        .map(|s| if s < n_ov { s } else { cfg.n_users_target + s - n_ov })
        .collect();

    let mut person_group = vec![Group::G0; n_persons];
    assign_groups(&mut person_group, 0..cfg.n_users_target, cfg.group_split, &mut rng);
    assign_groups(&mut person_group, cfg.n_users_target..n_persons, cfg.group_split, &mut rng);

    let person_latent = gaussian(n_persons, d, &mut rng);
    let item_target = gaussian(cfg.n_items_target, d, &mut rng);
    let raw_source = gaussian(cfg.n_items_source, d, &mut rng);
    let q = random_orthogonal(d, &mut rng);
    let transform = Array2::<f64>::eye(d) * (1.0 - cfg.domain_shift) + q * cfg.domain_shift;
    let item_source = raw_source.dot(&transform.t());

    let target_noise = vec![cfg.base_noise; cfg.n_users_target];
    let source_noise: Vec<f64> = source_person
        .iter()
        .map(|&p| match person_group[p] {
            Group::G0 => cfg.base_noise,
            Group::G1 => cfg.base_noise * cfg.source_disparity,
        })
        .collect();

    let mut target_noisy_scores = clean_scores(&person_latent, &target_person, &item_target);
    add_noise(&mut target_noisy_scores, &target_noise, &mut rng);
    let mut source_noisy_scores = clean_scores(&person_latent, &source_person, &item_source);
    add_noise(&mut source_noisy_scores, &source_noise, &mut rng);

    let interactions_target = top_items(&target_noisy_scores, cfg.interactions_per_user);
    let interactions_source = top_items(&source_noisy_scores, cfg.source_positives());

    let ids = IdMaps {
        users_target: target_person.iter().map(|p| format!("u{p}")).collect(),
        users_source: source_person.iter().map(|p| format!("u{p}")).collect(),
        items_target: (0..cfg.n_items_target).map(|i| format!("t{i}")).collect(),
        items_source: (0..cfg.n_items_source).map(|i| format!("s{i}")).collect(),
    };
    let dataset = CrossDomainDataset {
        n_users_source: cfg.n_users_source,
        n_users_target: cfg.n_users_target,
        n_items_source: cfg.n_items_source,
        n_items_target: cfg.n_items_target,
        overlap: (0..cfg.n_users_target).map(|t| (t < n_ov).then_some(t)).collect(),
        interactions_source,
        interactions_target,
        groups: target_person.iter().map(|&p| person_group[p]).collect(),
        groups_source: source_person.iter().map(|&p| Some(person_group[p])).collect(),
        ids,
    };
    dataset.validate()?;
    Ok(SyntheticWorld {
        dataset,
        person_latent,
        item_target,
        item_source,
        target_person,
        source_person,
        source_noise,
        target_noisy_scores,
        source_noisy_scores,
    })
}

fn assign_groups(groups: &mut [Group], range: std::ops::Range<usize>, split: f64, rng: &mut ChaCha8Rng) {
    let mut members: Vec<usize> = range.collect();
    let n = members.len();
    if n == 0 {
        return;
    }
    let mut n_g1 = (split * n as f64).round() as usize;
    if n >= 2 {
        n_g1 = n_g1.clamp(1, n - 1);
    }
    members.shuffle(rng);
    for &p in &members[..n_g1] {
        groups[p] = Group::G1;
    }
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// Gram-Schmidt on a Gaussian matrix.
fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let g = gaussian(d, d, rng);
    let mut q = Array2::<f64>::zeros((d, d));
    for j in 0..d {
        let mut v: Array1<f64> = g.column(j).to_owned();
        for k in 0..j {
            let qk = q.column(k);
            let proj = qk.dot(&v);
            v.scaled_add(-proj, &qk);
        }
        let norm = v.dot(&v).sqrt();
        q.column_mut(j).assign(&(v / norm));
    }
    q
}

fn add_noise(scores: &mut Array2<f64>, scale: &[f64], rng: &mut ChaCha8Rng) {
    for (mut row, &s) in scores.rows_mut().into_iter().zip(scale) {
        for x in row.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *x += s * z;
        }
    }
}

fn top_items(scores: &Array2<f64>, k: usize) -> Vec<Pair> {
    let mut out = Vec::with_capacity(scores.nrows() * k);
    let mut order: Vec<usize> = Vec::with_capacity(scores.ncols());
    for (u, row) in scores.rows().into_iter().enumerate() {
        order.clear();
        order.extend(0..row.len());
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        let mut top = order[..k].to_vec();
        top.sort_unstable();
        out.extend(top.into_iter().map(|i| (u, i)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_users_source: 60,
            n_users_target: 50,
            n_items_source: 40,
            n_items_target: 30,
            latent_dim: 4,
            interactions_per_user: 5,
            rng_seed: 9,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SynthConfig { rng_seed: 10, ..small() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn shape_and_overlap() {
        let ds = generate_synthetic(&small()).unwrap();
        assert_eq!(ds.interactions_target.len(), 50 * 5);
        assert_eq!(ds.interactions_source.len(), 60 * 5);
        assert_eq!(ds.n_overlap(), 25);
        let counts = ds.group_counts();
        assert_eq!(counts, [25, 25]);
        for t in ds.overlapping_users() {
            let s = ds.overlap[t].unwrap();
            assert_eq!(ds.ids.users_target[t], ds.ids.users_source[s]);
        }
    }

    #[test]
    fn too_many_interactions_rejected() {
        let cfg = SynthConfig { interactions_per_user: 31, ..small() };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn zero_shift_keeps_source_items_untransformed_in_distribution() {
        let q = random_orthogonal(5, &mut ChaCha8Rng::seed_from_u64(1));
        let qtq = q.t().dot(&q);
        for i in 0..5 {
            for j in 0..5 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((qtq[[i, j]] - expect).abs() < 1e-12);
            }
        }
    }
}
