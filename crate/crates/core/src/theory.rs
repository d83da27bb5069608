//! Empirical checks of the fairness bounds: exact Wasserstein-1 by optimal
//! matching, the group/domain decomposition bound, Rademacher complexity of
//! a finite surrogate class, and Lipschitz lower bounds.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::backbone::Snapshot;
use crate::dataset::Group;
use crate::error::{Error, Result};
use crate::seed::{component_rng, derive_seed};

/// Minimum-cost perfect matching on a square cost matrix (shortest
/// augmenting paths with potentials, O(n^3)). Returns the total cost and
/// `assignment[row] = col`.
pub fn min_cost_matching(cost: ArrayView2<'_, f64>) -> Result<(f64, Vec<usize>)> {
    let n = cost.nrows();
    if n != cost.ncols() {
        return Err(Error::Shape(format!("cost matrix is {}x{}", n, cost.ncols())));
    }
    if n == 0 {
        return Ok((0.0, Vec::new()));
    }
    // 1-based arrays; column 0 is a virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if !delta.is_finite() {
                return Err(Error::Numerical("non-finite matching cost".into()));
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    let total = assignment.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum();
    Ok((total, assignment))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn euclidean(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Pairwise Euclidean distances between the rows of `a` and `b`.
pub fn euclidean_cost(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), b.nrows()), |(i, j)| euclidean(a.row(i), b.row(j)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct W1Config {
    pub subsample_n: usize,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for W1Config {
    fn default() -> Self {
        Self {
            subsample_n: 256,
            repetitions: 8,
            seed: 0,
        }
    }
}

/// Empirical W1 between two point clouds. Exact when the least common
/// multiple of the cloud sizes is at most `subsample_n` (points replicated
/// to equal mass); otherwise the mean optimal-matching cost per point over
/// `repetitions` equal-size subsamples.
pub fn wasserstein1(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, cfg: &W1Config) -> Result<f64> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::Data("wasserstein distance of an empty cloud".into()));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::Shape(format!("clouds in R^{} and R^{}", a.ncols(), b.ncols())));
    }
    if cfg.subsample_n == 0 || cfg.repetitions == 0 {
        return Err(Error::Config("subsample size and repetitions must be positive".into()));
    }
    let (na, nb) = (a.nrows(), b.nrows());
    let l = na / gcd(na, nb) * nb;
    if l <= cfg.subsample_n {
        // exact: each point replicated to equal total mass
        let ra: Vec<usize> = (0..l).map(|k| k / (l / na)).collect();
        let rb: Vec<usize> = (0..l).map(|k| k / (l / nb)).collect();
        let cost = euclidean_cost(a.select(Axis(0), &ra).view(), b.select(Axis(0), &rb).view());
        return Ok(min_cost_matching(cost.view())?.0 / l as f64);
    }
    let m = cfg.subsample_n.min(na).min(nb);
    let mut total = 0.0;
    for r in 0..cfg.repetitions {
        let mut rng = component_rng(cfg.seed, &format!("w1/{r}"));
        let pick = |x: ArrayView2<'_, f64>, rng: &mut rand_chacha::ChaCha8Rng| {
            if x.nrows() == m {
                x.to_owned()
            } else {
                let mut idx = sample(rng, x.nrows(), m).into_vec();
                idx.sort_unstable();
                x.select(Axis(0), &idx)
            }
        };
        let sa = pick(a, &mut rng);
        let sb = pick(b, &mut rng);
        total += min_cost_matching(euclidean_cost(sa.view(), sb.view()).view())?.0 / m as f64;
    }
    Ok(total / cfg.repetitions as f64)
}

/// User representations split by domain and group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupClouds {
    /// Indexed by group.
    pub target: [Array2<f64>; 2],
    pub source: [Array2<f64>; 2],
}

impl GroupClouds {
    pub fn new(target: [Array2<f64>; 2], source: [Array2<f64>; 2]) -> Result<Self> {
        let d = target[0].ncols();
        for (name, c) in [("target g0", &target[0]), ("target g1", &target[1]), ("source g0", &source[0]), ("source g1", &source[1])] {
            if c.nrows() == 0 {
                return Err(Error::Data(format!("{name} cloud has no users")));
            }
            if c.ncols() != d {
                return Err(Error::Shape(format!("{name} cloud has dimension {}, expected {d}", c.ncols())));
            }
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numerical(format!("{name} cloud has non-finite coordinates")));
            }
        }
        Ok(Self { target, source })
    }

    /// Splits snapshot user tables by group; source users without a group
    /// are left out.
    pub fn from_snapshot(snap: &Snapshot, target_groups: &[Group], source_groups: &[Option<Group>]) -> Result<Self> {
        let tgt = snap.user_emb_target.mapv(f64::from);
        let src = snap.user_emb_source.mapv(f64::from);
        if tgt.nrows() != target_groups.len() || src.nrows() != source_groups.len() {
            return Err(Error::Shape(format!(
                "snapshot has {} target and {} source users, attributes cover {} and {}",
                tgt.nrows(),
                src.nrows(),
                target_groups.len(),
                source_groups.len()
            )));
        }
        let split = |m: &Array2<f64>, labels: Vec<Option<Group>>| {
            Group::ALL.map(|g| {
                let idx: Vec<usize> = (0..labels.len()).filter(|&k| labels[k] == Some(g)).collect();
                m.select(Axis(0), &idx)
            })
        };
        Self::new(
            split(&tgt, target_groups.iter().map(|&g| Some(g)).collect()),
            split(&src, source_groups.to_vec()),
        )
    }

    pub fn target_all(&self) -> Array2<f64> {
        ndarray::concatenate(Axis(0), &[self.target[0].view(), self.target[1].view()]).unwrap()
    }

    pub fn source_all(&self) -> Array2<f64> {
        ndarray::concatenate(Axis(0), &[self.source[0].view(), self.source[1].view()]).unwrap()
    }

    /// Root mean squared norm over all points, used to scale tolerances.
    pub fn scale(&self) -> f64 {
        let all = [&self.target[0], &self.target[1], &self.source[0], &self.source[1]];
        let n: usize = all.iter().map(|c| c.nrows()).sum();
        (all.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>()).sum::<f64>() / n as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub w1_source_groups: f64,
    pub delta_t: [f64; 2],
    pub delta_s: [f64; 2],
    pub delta_ts: f64,
    /// Target group distance computed directly.
    pub w1_target_groups: f64,
    pub l_o: f64,
    pub l_f: f64,
    pub rhs: f64,
    /// Decomposed sum minus the direct target distance.
    pub chain_slack: f64,
    pub measured_ugf: Option<f64>,
    pub baseline_ugf: Option<f64>,
    pub preserved: Option<bool>,
    pub margin: Option<f64>,
    pub subsample_n: usize,
    pub repetitions: usize,
    pub note: String,
}

impl BoundReport {
    /// `W1(source groups) + delta terms + 2 * delta_ts`.
    pub fn decomposed_sum(&self) -> f64 {
        self.w1_source_groups + self.delta_t[0] + self.delta_t[1] + self.delta_s[0] + self.delta_s[1] + 2.0 * self.delta_ts
    }

    pub fn recompute_rhs(&self) -> f64 {
        self.l_o * self.l_f * self.decomposed_sum()
    }

    pub fn with_baseline(mut self, baseline_ugf: f64) -> Self {
        let v = preservation_check(&self, baseline_ugf);
        self.baseline_ugf = Some(baseline_ugf);
        self.preserved = Some(v.holds);
        self.margin = Some(v.margin);
        self
    }
}

const LO_NOTE: &str = "L_o is supplied, not estimated: ranking metrics are not Lipschitz in embedding space";

pub fn transfer_bound(clouds: &GroupClouds, l_o: f64, l_f: f64, cfg: &W1Config) -> Result<BoundReport> {
    if !(l_o > 0.0 && l_f > 0.0) {
        return Err(Error::Config(format!("Lipschitz constants must be positive, got {l_o} and {l_f}")));
    }
    let w = |a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, term: &str| {
        wasserstein1(a, b, &W1Config { seed: derive_seed(cfg.seed, term), ..*cfg })
    };
    let t_all = clouds.target_all();
    let s_all = clouds.source_all();
    let w1_source_groups = w(clouds.source[0].view(), clouds.source[1].view(), "source-groups")?;
    let delta_t = [
        w(clouds.target[0].view(), t_all.view(), "delta-t0")?,
        w(clouds.target[1].view(), t_all.view(), "delta-t1")?,
    ];
    let delta_s = [
        w(clouds.source[0].view(), s_all.view(), "delta-s0")?,
        w(clouds.source[1].view(), s_all.view(), "delta-s1")?,
    ];
    let delta_ts = w(t_all.view(), s_all.view(), "delta-ts")?;
    let w1_target_groups = w(clouds.target[0].view(), clouds.target[1].view(), "target-groups")?;
    let mut report = BoundReport {
        w1_source_groups,
        delta_t,
        delta_s,
        delta_ts,
        w1_target_groups,
        l_o,
        l_f,
        rhs: 0.0,
        chain_slack: 0.0,
        measured_ugf: None,
        baseline_ugf: None,
        preserved: None,
        margin: None,
        subsample_n: cfg.subsample_n,
        repetitions: cfg.repetitions,
        note: LO_NOTE.to_string(),
    };
    report.rhs = report.recompute_rhs();
    report.chain_slack = report.decomposed_sum() - w1_target_groups;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub holds: bool,
    /// `baseline - rhs`; non-negative exactly when the condition holds.
    pub margin: f64,
}

pub fn preservation_check(report: &BoundReport, baseline_ugf: f64) -> Verdict {
    Verdict {
        holds: report.rhs <= baseline_ugf,
        margin: baseline_ugf - report.rhs,
    }
}

/// Largest gap of group means over 1-Lipschitz probes: every coordinate
/// projection and `n_random` random unit directions.
pub fn max_probe_gap(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, n_random: usize, seed: u64) -> f64 {
    let d = a.ncols();
    let ma = a.mean_axis(Axis(0)).unwrap();
    let mb = b.mean_axis(Axis(0)).unwrap();
    let diff = &ma - &mb;
    let mut best = diff.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut rng = component_rng(seed, "probes");
    for _ in 0..n_random {
        let dir: Array1<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = dir.dot(&dir).sqrt();
        if norm > 0.0 {
            best = best.max((diff.dot(&dir) / norm).abs());
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    /// Estimate for the class itself.
    pub class: f64,
    /// Bound for the difference class, twice the class value.
    pub gain_class: f64,
    pub sign_draws: usize,
    pub exhaustive: bool,
}

fn check_values(values: ArrayView2<'_, f64>) -> Result<()> {
    if values.nrows() == 0 || values.ncols() == 0 {
        return Err(Error::Config("rademacher estimate needs at least one function and one point".into()));
    }
    Ok(())
}

fn sup_correlation(values: ArrayView2<'_, f64>, signs: &[f64]) -> f64 {
    let n = values.ncols() as f64;
    values
        .rows()
        .into_iter()
        .map(|h| h.iter().zip(signs).map(|(x, s)| x * s).sum::<f64>() / n)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Monte-Carlo estimate over `n_sign_draws` uniform sign vectors;
/// `values` is functions x points.
pub fn rademacher_estimate(values: ArrayView2<'_, f64>, n_sign_draws: usize, seed: u64) -> Result<RademacherEstimate> {
    check_values(values)?;
    if n_sign_draws == 0 {
        return Err(Error::Config("need at least one sign draw".into()));
    }
    let mut rng = component_rng(seed, "rademacher");
    let mut signs = vec![0.0; values.ncols()];
    let mut total = 0.0;
    for _ in 0..n_sign_draws {
        for s in signs.iter_mut() {
            *s = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        }
        total += sup_correlation(values, &signs);
    }
    let class = total / n_sign_draws as f64;
    Ok(RademacherEstimate {
        class,
        gain_class: 2.0 * class,
        sign_draws: n_sign_draws,
        exhaustive: false,
    })
}

pub const MAX_EXHAUSTIVE_POINTS: usize = 20;

/// Exact expectation over all `2^n` sign vectors.
pub fn rademacher_exhaustive(values: ArrayView2<'_, f64>) -> Result<RademacherEstimate> {
    check_values(values)?;
    let n = values.ncols();
    if n > MAX_EXHAUSTIVE_POINTS {
        return Err(Error::Config(format!("exhaustive enumeration limited to {MAX_EXHAUSTIVE_POINTS} points, got {n}")));
    }
    let mut signs = vec![0.0; n];
    let mut total = 0.0;
    let count = 1u64 << n;
    for mask in 0..count {
        for (i, s) in signs.iter_mut().enumerate() {
            *s = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
        }
        total += sup_correlation(values, &signs);
    }
    let class = total / count as f64;
    Ok(RademacherEstimate {
        class,
        gain_class: 2.0 * class,
        sign_draws: count as usize,
        exhaustive: true,
    })
}

/// `2 R + B sqrt(ln(2 / delta) / (2 n))`.
pub fn deviation_bound(rademacher: f64, b: f64, n: usize, delta: f64) -> Result<f64> {
    if !(b > 0.0) || n == 0 || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("need B > 0, n >= 1, delta in (0, 1); got B={b}, n={n}, delta={delta}")));
    }
    Ok(2.0 * rademacher + b * ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt())
}

/// Values of `h_j(z) = sigmoid(z . item_j)` for `n_items` sampled items
/// (rows) at every user point (columns).
pub fn gain_surrogate_values(users: ArrayView2<'_, f64>, items: ArrayView2<'_, f64>, n_items: usize, seed: u64) -> Result<Array2<f64>> {
    if items.nrows() == 0 {
        return Err(Error::Data("no items for the surrogate class".into()));
    }
    let m = n_items.min(items.nrows());
    let mut rng = component_rng(seed, "surrogate-items");
    let mut idx = sample(&mut rng, items.nrows(), m).into_vec();
    idx.sort_unstable();
    let scores = items.select(Axis(0), &idx).dot(&users.t());
    Ok(scores.mapv(crate::gain::sigmoid))
}

/// Largest ratio `|f(z1) - f(z2)| / |z1 - z2|` over sampled point pairs; a
/// lower bound on the Lipschitz constant of `f`.
pub fn lipschitz_estimate<F>(f: F, cloud: ArrayView2<'_, f64>, n_pairs: usize, seed: u64) -> Result<f64>
where
    F: Fn(ArrayView1<'_, f64>) -> Array1<f64>,
{
    let n = cloud.nrows();
    if n < 2 {
        return Err(Error::Data("lipschitz estimate needs at least two points".into()));
    }
    let mut rng = component_rng(seed, "lipschitz");
    let mut best: Option<f64> = None;
    for _ in 0..n_pairs {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let dz = euclidean(cloud.row(i), cloud.row(j));
        if dz == 0.0 {
            continue;
        }
        let df = euclidean(f(cloud.row(i)).view(), f(cloud.row(j)).view());
        let r = df / dz;
        best = Some(best.map_or(r, |b: f64| b.max(r)));
    }
    best.ok_or_else(|| Error::Data("every sampled pair was degenerate".into()))
}
