//! Full-ranking top-K evaluation with per-group aggregation, the group gap
//! (UGF), and paired significance tests.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::backbone::Backbone;
use crate::dataset::{Group, SplitDataset};
use crate::error::{Error, Result};

pub const DEFAULT_KS: [usize; 2] = [10, 20];

/// Descending score, ties by ascending item id.
#[inline]
fn rank_order(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

fn is_excluded(excludes: &[&[usize]], item: usize) -> bool {
    excludes.iter().any(|e| e.binary_search(&item).is_ok())
}

/// Ranks `scores` (indexed by item) with excluded items removed; at most
/// `limit` items are returned.
pub fn rank_scores(scores: &[f64], excludes: &[&[usize]], limit: Option<usize>) -> Vec<usize> {
    let mut cand: Vec<(f64, usize)> = scores
        .iter()
        .enumerate()
        .filter(|(i, _)| !is_excluded(excludes, *i))
        .map(|(i, &s)| (s, i))
        .collect();
    match limit {
        Some(k) if k < cand.len() => {
            if k == 0 {
                return Vec::new();
            }
            cand.select_nth_unstable_by(k - 1, rank_order);
            cand.truncate(k);
        }
        _ => {}
    }
    cand.sort_by(rank_order);
    cand.into_iter().map(|(_, i)| i).collect()
}

/// All target items ranked for `user`, exclusions removed (sorted lists).
pub fn rank_items(b: &Backbone, user: usize, excludes: &[&[usize]]) -> Result<Vec<usize>> {
    let u = b.user_target_vector(user)?;
    let scores = b.items_target.dot(&u).to_vec();
    Ok(rank_scores(&scores, excludes, None))
}

pub fn recall_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let hits = ranked.iter().take(k).filter(|i| relevant.contains(i)).count();
    hits as f64 / relevant.len() as f64
}

/// Binary-relevance NDCG with `1 / log2(rank + 1)` discounts.
pub fn ndcg_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| relevant.contains(i))
        .map(|(r, _)| 1.0 / ((r + 2) as f64).log2())
        .sum();
    let idcg: f64 = (0..relevant.len().min(k)).map(|r| 1.0 / ((r + 2) as f64).log2()).sum();
    dcg / idcg
}

/// Absolute gap of the two group means.
pub fn ugf(group_means: [Option<f64>; 2]) -> Result<f64> {
    match group_means {
        [Some(a), Some(b)] => Ok((a - b).abs()),
        _ => Err(Error::Data("both groups need evaluable users for UGF".into())),
    }
}

/// Paired two-sided t-test. With zero variance of the differences the
/// p-value is 1 when the mean difference is zero and 0 otherwise.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::Data(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Data("paired t-test needs at least two pairs".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Ok(if mean == 0.0 { (0.0, 1.0) } else { (mean.signum() * f64::INFINITY, 0.0) });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok((t, p.clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Relevant = validation positives; training positives excluded.
    Validation,
    /// Relevant = test positives; training and validation positives excluded.
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    /// e.g. `Recall@10`
    pub metric: String,
    pub overall: f64,
    pub g0: f64,
    pub g1: f64,
    pub ugf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    /// Relative change of the overall value vs the baseline, in percent.
    pub accuracy_change_pct: f64,
    /// Relative reduction of UGF vs the baseline, in percent.
    pub ugf_reduction_pct: f64,
    pub t: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: String,
    pub rows: Vec<ComparisonRow>,
    /// Arithmetic mean of the per-metric accuracy changes (percent).
    pub mean_accuracy_change_pct: f64,
    /// Arithmetic mean of the per-metric UGF reductions (percent).
    pub mean_ugf_reduction_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub ks: Vec<usize>,
    pub metrics: Vec<MetricSummary>,
    pub n_users: [usize; 2],
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub comparison: Option<Comparison>,
    /// Per evaluable user (ascending id), one value per entry of `metrics`.
    #[serde(skip)]
    pub per_user: Vec<(usize, Vec<f64>)>,
}

fn metric_names(ks: &[usize]) -> Vec<String> {
    let mut names = Vec::new();
    for k in ks {
        names.push(format!("Recall@{k}"));
    }
    for k in ks {
        names.push(format!("NDCG@{k}"));
    }
    names
}

impl EvaluationReport {
    pub fn get(&self, metric: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.metric == metric)
    }

    pub fn overall(&self, metric: &str) -> f64 {
        self.get(metric).map_or(f64::NAN, |m| m.overall)
    }

    pub fn ugf(&self, metric: &str) -> f64 {
        self.get(metric).map_or(f64::NAN, |m| m.ugf)
    }

    /// One row per `(metric, scope)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,scope,value\n");
        for m in &self.metrics {
            for (scope, v) in [("overall", m.overall), ("g0", m.g0), ("g1", m.g1), ("ugf", m.ugf)] {
                out.push_str(&format!("{},{},{}\n", m.metric, scope, v));
            }
        }
        out
    }

    /// Fills [`EvaluationReport::comparison`] against `baseline`, which must
    /// come from the same split.
    pub fn compare_with(&mut self, baseline: &EvaluationReport, name: &str) -> Result<()> {
        if baseline.per_user.iter().map(|p| p.0).ne(self.per_user.iter().map(|p| p.0)) {
            return Err(Error::Data("reports cover different users".into()));
        }
        let mut rows = Vec::new();
        for (k, m) in self.metrics.iter().enumerate() {
            let base = baseline
                .get(&m.metric)
                .ok_or_else(|| Error::Data(format!("baseline lacks {}", m.metric)))?;
            let a: Vec<f64> = self.per_user.iter().map(|p| p.1[k]).collect();
            let bk = baseline.metrics.iter().position(|x| x.metric == m.metric).unwrap();
            let b: Vec<f64> = baseline.per_user.iter().map(|p| p.1[bk]).collect();
            let (t, p_value) = paired_ttest(&a, &b)?;
            rows.push(ComparisonRow {
                metric: m.metric.clone(),
                accuracy_change_pct: relative_pct(m.overall, base.overall),
                ugf_reduction_pct: -relative_pct(m.ugf, base.ugf),
                t,
                p_value,
            });
        }
        let mean = |f: fn(&ComparisonRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len().max(1) as f64;
        self.comparison = Some(Comparison {
            baseline: name.to_string(),
            mean_accuracy_change_pct: mean(|r| r.accuracy_change_pct),
            mean_ugf_reduction_pct: mean(|r| r.ugf_reduction_pct),
            rows,
        });
        Ok(())
    }
}

fn relative_pct(value: f64, base: f64) -> f64 {
    if base == 0.0 {
        if value == 0.0 {
            0.0
        } else {
            f64::INFINITY * value.signum()
        }
    } else {
        100.0 * (value - base) / base
    }
}

/// Evaluates every target user with at least one relevant item for `stage`.
pub fn evaluate(b: &Backbone, data: &SplitDataset, stage: Stage, ks: &[usize]) -> Result<EvaluationReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Config("evaluation cutoffs must be positive".into()));
    }
    let max_k = *ks.iter().max().unwrap();
    let names = metric_names(ks);
    let relevant_of = |u: usize| match stage {
        Stage::Validation => &data.target_val_items[u],
        Stage::Test => &data.target_test_items[u],
    };
    let users: Vec<usize> = (0..data.dataset.n_users_target)
        .filter(|&u| !relevant_of(u).is_empty())
        .collect();

    let user_matrix = b.target_user_matrix();
    let mut per_user = Vec::with_capacity(users.len());
    for chunk in users.chunks(256) {
        let rows = user_matrix.select(ndarray::Axis(0), chunk);
        let scores: Array2<f64> = rows.dot(&b.items_target.t());
        for (k, &u) in chunk.iter().enumerate() {
            let row = scores.slice(s![k, ..]);
            let excludes: Vec<&[usize]> = match stage {
                Stage::Validation => vec![&data.target_train_items[u]],
                Stage::Test => vec![&data.target_train_items[u], &data.target_val_items[u]],
            };
            let ranked = rank_scores(row.as_slice().unwrap(), &excludes, Some(max_k));
            let rel = relevant_of(u);
            let mut values: Vec<f64> = ks.iter().map(|&k| recall_at_k(&ranked, rel, k)).collect();
            values.extend(ks.iter().map(|&k| ndcg_at_k(&ranked, rel, k)));
            per_user.push((u, values));
        }
    }
    summarize(&names, ks, &per_user, &data.dataset.groups)
}

/// A group without evaluable users yields NaN group values and UGF.
fn summarize(names: &[String], ks: &[usize], per_user: &[(usize, Vec<f64>)], groups: &[Group]) -> Result<EvaluationReport> {
    let mut n_users = [0usize; 2];
    let mut sums = vec![[0.0f64; 2]; names.len()];
    for (u, vals) in per_user {
        let g = groups[*u].index();
        n_users[g] += 1;
        for (m, v) in vals.iter().enumerate() {
            sums[m][g] += v;
        }
    }
    let total = (n_users[0] + n_users[1]) as f64;
    let mut metrics = Vec::with_capacity(names.len());
    for (m, name) in names.iter().enumerate() {
        let mean = |g: usize| (n_users[g] > 0).then(|| sums[m][g] / n_users[g] as f64);
        let g0 = mean(0);
        let g1 = mean(1);
        metrics.push(MetricSummary {
            metric: name.clone(),
            overall: if total > 0.0 { (sums[m][0] + sums[m][1]) / total } else { 0.0 },
            g0: g0.unwrap_or(f64::NAN),
            g1: g1.unwrap_or(f64::NAN),
            ugf: ugf([g0, g1]).unwrap_or(f64::NAN),
        });
    }
    Ok(EvaluationReport {
        ks: ks.to_vec(),
        metrics,
        n_users,
        comparison: None,
        per_user: per_user.to_vec(),
    })
}

/// Per-user metric value lookup keyed by metric name, for downstream tests.
pub fn per_user_values(report: &EvaluationReport, metric: &str) -> BTreeMap<usize, f64> {
    let Some(k) = report.metrics.iter().position(|m| m.metric == metric) else {
        return BTreeMap::new();
    };
    report.per_user.iter().map(|(u, v)| (*u, v[k])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ranking_examples() {
        assert_eq!(rank_scores(&[0.5, 0.9, 0.1], &[], None), vec![1, 0, 2]);
        assert_eq!(rank_scores(&[0.5, 0.9, 0.1], &[&[1]], None), vec![0, 2]);
        assert_eq!(rank_scores(&[0.3, 0.7, 0.3, 0.7], &[], None), vec![1, 3, 0, 2]);
        assert_eq!(rank_scores(&[0.3, 0.7, 0.3, 0.7], &[], Some(3)), vec![1, 3, 0]);
    }

    #[test]
    fn recall_examples() {
        let ranked: Vec<usize> = (0..20).collect();
        assert_eq!(recall_at_k(&ranked, &[3, 15], 10), 0.5);
        assert_eq!(recall_at_k(&ranked, &[3, 5], 10), 1.0);
        assert_eq!(recall_at_k(&ranked, &[1], 1), 0.0);
    }

    #[test]
    fn ndcg_examples() {
        let ranked: Vec<usize> = (0..20).collect();
        assert_eq!(ndcg_at_k(&ranked, &[0], 10), 1.0);
        assert!((ndcg_at_k(&ranked, &[2], 10) - 0.5).abs() < 1e-15);
        assert_eq!(ndcg_at_k(&ranked, &[15], 10), 0.0);
    }

    #[test]
    fn ugf_examples() {
        assert!((ugf([Some(0.3), Some(0.2)]).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(ugf([Some(0.2), Some(0.2)]).unwrap(), 0.0);
        assert!(ugf([Some(0.2), None]).is_err());
    }

    #[test]
    fn ttest_conventions() {
        let a = [0.1, 0.4, 0.3];
        assert_eq!(paired_ttest(&a, &a).unwrap(), (0.0, 1.0));
        let b = [1.1, 1.4, 1.3];
        assert_eq!(paired_ttest(&b, &a).unwrap().1, 0.0);
        assert!(paired_ttest(&a, &a[..2]).is_err());
        assert!(paired_ttest(&a[..1], &a[..1]).is_err());
    }

    /// Two-sided p-value by Simpson integration of the t density.
    fn t_pvalue_by_quadrature(t: f64, df: f64) -> f64 {
        let ln_c = statrs::function::gamma::ln_gamma((df + 1.0) / 2.0)
            - statrs::function::gamma::ln_gamma(df / 2.0)
            - 0.5 * (df * std::f64::consts::PI).ln();
        let pdf = |x: f64| (ln_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
        let n = 200_000;
        let h = t / n as f64;
        let mut acc = pdf(0.0) + pdf(t);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * pdf(i as f64 * h);
        }
        let half_mass = acc * h / 3.0;
        1.0 - 2.0 * half_mass
    }

    #[test]
    fn ttest_matches_quadrature_oracle() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [0.0; 5];
        let (t, p) = paired_ttest(&a, &b).unwrap();
        assert!((t - 5f64.sqrt() * 3.0 / 2.5f64.sqrt()).abs() < 1e-12);
        let oracle = t_pvalue_by_quadrature(t, 4.0);
        assert!((p - oracle).abs() < 1e-9, "{p} vs {oracle}");
        assert!((p - 0.0132).abs() < 5e-4);
    }

    /// Exhaustive check over every ranking of 5 items.
    #[test]
    fn brute_force_small_instances() {
        fn permutations(items: Vec<usize>) -> Vec<Vec<usize>> {
            if items.len() <= 1 {
                return vec![items];
            }
            let mut out = Vec::new();
            for i in 0..items.len() {
                let mut rest = items.clone();
                let head = rest.remove(i);
                for mut p in permutations(rest) {
                    p.insert(0, head);
                    out.push(p);
                }
            }
            out
        }
        let relevant = [1usize, 3];
        for perm in permutations((0..5).collect()) {
            for k in 1..=5 {
                let hits: Vec<usize> = (0..k).filter(|&r| relevant.contains(&perm[r])).collect();
                let recall = hits.len() as f64 / 2.0;
                let dcg: f64 = hits.iter().map(|&r| 1.0 / ((r + 2) as f64).log2()).sum();
                let idcg: f64 = (0..2.min(k)).map(|r| 1.0 / ((r + 2) as f64).log2()).sum();
                assert!((recall_at_k(&perm, &relevant, k) - recall).abs() < 1e-12);
                assert!((ndcg_at_k(&perm, &relevant, k) - dcg / idcg).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn metrics_bounded_and_monotone(perm in Just((0..30usize).collect::<Vec<_>>()).prop_shuffle(),
                                        rel in proptest::collection::btree_set(0usize..30, 1..6)) {
            let rel: Vec<usize> = rel.into_iter().collect();
            let mut prev = (0.0, 0.0);
            for k in 1..=30 {
                let r = recall_at_k(&perm, &rel, k);
                let n = ndcg_at_k(&perm, &rel, k);
                prop_assert!((0.0..=1.0).contains(&r));
                prop_assert!((0.0..=1.0 + 1e-12).contains(&n));
                prop_assert!(r + 1e-12 >= prev.0);
                prop_assert!(r + 1e-12 >= prev.0);
                prev = (r, n);
            }
        }

        #[test]
        fn ugf_symmetric(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            prop_assert_eq!(ugf([Some(a), Some(b)]).unwrap(), ugf([Some(b), Some(a)]).unwrap());
        }
    }
}
