//! Group-aware negative sampling.
//!
//! Each group's training loss is smoothed across epochs with momentum
//! `beta`; the relative gap of a user's group to the two-group average sets a
//! per-user softmax temperature `tau = exp(-epsilon * alpha)`. Negatives are
//! drawn from a small uniform candidate set with probabilities proportional
//! to `exp(score / tau)`, so a disadvantaged group (alpha > 0, tau < 1) sees
//! harder negatives.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::Backbone;
use crate::dataset::{Group, SplitDataset};
use crate::error::{Error, Result};

pub const DEFAULT_BETA: f64 = 0.9;
const DEGENERATE_AVG: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupLossTracker {
    pub beta: f64,
    pub ema: [Option<f64>; 2],
    sums: [f64; 2],
    counts: [usize; 2],
    epochs: usize,
}

impl Default for GroupLossTracker {
    fn default() -> Self {
        Self::new(DEFAULT_BETA)
    }
}

impl GroupLossTracker {
    pub fn new(beta: f64) -> Self {
        Self {
            beta,
            ema: [None; 2],
            sums: [0.0; 2],
            counts: [0; 2],
            epochs: 0,
        }
    }

    /// Completed epochs.
    pub fn epochs(&self) -> usize {
        self.epochs
    }

    pub fn accumulate_sample_loss(&mut self, group: Group, loss: f64) -> Result<()> {
        self.accumulate_index(group.index(), loss)
    }

    pub fn accumulate_index(&mut self, group: usize, loss: f64) -> Result<()> {
        if group > 1 {
            return Err(Error::Data(format!("unknown group index {group}")));
        }
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("non-finite sample loss {loss}")));
        }
        self.sums[group] += loss;
        self.counts[group] += 1;
        Ok(())
    }

    /// Mean loss accumulated so far this epoch, if any.
    pub fn epoch_mean(&self, group: Group) -> Option<f64> {
        let g = group.index();
        (self.counts[g] > 0).then(|| self.sums[g] / self.counts[g] as f64)
    }

    pub fn epoch_count(&self, group: Group) -> usize {
        self.counts[group.index()]
    }

    /// Folds the epoch means into the smoothed losses and resets the
    /// accumulators. A group without samples keeps its previous value.
    pub fn end_epoch(&mut self) -> Result<[f64; 2]> {
        let mut next = self.ema;
        for g in Group::ALL {
            let i = g.index();
            next[i] = match (self.ema[i], self.epoch_mean(g)) {
                (None, Some(mean)) => Some(mean),
                (Some(prev), Some(mean)) => Some(self.beta * prev + (1.0 - self.beta) * mean),
                (Some(prev), None) => Some(prev),
                (None, None) => return Err(Error::EmptyGroup(i)),
            };
        }
        self.ema = next;
        self.sums = [0.0; 2];
        self.counts = [0; 2];
        self.epochs += 1;
        Ok([next[0].unwrap(), next[1].unwrap()])
    }

    /// Relative gap of `group`'s smoothed loss to the two-group average.
    pub fn alpha(&self, group: Group) -> Result<f64> {
        let (Some(l0), Some(l1)) = (self.ema[0], self.ema[1]) else {
            return Err(Error::Data("group losses not yet available".into()));
        };
        let avg = 0.5 * (l0 + l1);
        if avg.is_nan() || avg <= DEGENERATE_AVG {
            return Err(Error::DegenerateLosses(avg));
        }
        // Written as +-(l0 - l1)/2 so the two values are exact negatives.
        let half_gap = 0.5 * (l0 - l1);
        Ok(match group {
            Group::G0 => half_gap / avg,
            Group::G1 => -half_gap / avg,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub epsilon: f64,
    pub candidate_size: usize,
    pub negatives_per_positive: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            candidate_size: 8,
            negatives_per_positive: 1,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config("epsilon must be a finite non-negative number".into()));
        }
        if self.candidate_size == 0 {
            return Err(Error::Config("candidate_size must be at least 1".into()));
        }
        if self.negatives_per_positive == 0 {
            return Err(Error::Config("negatives_per_positive must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn temperature(alpha: f64, epsilon: f64) -> f64 {
    (-epsilon * alpha).exp()
}

/// Uniform sample without replacement of up to `size` items from
/// `0..n_items` minus the sorted `excluded` list. Shrinks to every eligible
/// item when fewer than `size` remain.
pub fn sample_candidates<R: Rng + ?Sized>(
    n_items: usize,
    excluded: &[usize],
    size: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n_eligible = n_items.saturating_sub(excluded.len());
    if n_eligible == 0 {
        return Err(Error::Data("no unlabeled items available for negative sampling".into()));
    }
    let is_excluded = |i: usize| excluded.binary_search(&i).is_ok();
    if n_eligible <= size {
        return Ok((0..n_items).filter(|&i| !is_excluded(i)).collect());
    }
    if excluded.len() * 2 > n_items {
        let eligible: Vec<usize> = (0..n_items).filter(|&i| !is_excluded(i)).collect();
        return Ok(rand::seq::index::sample(rng, eligible.len(), size)
            .into_iter()
            .map(|k| eligible[k])
            .collect());
    }
    let mut out = Vec::with_capacity(size);
    while out.len() < size {
        let i = rng.gen_range(0..n_items);
        if !is_excluded(i) && !out.contains(&i) {
            out.push(i);
        }
    }
    Ok(out)
}

/// Candidate set for a target user, excluding the user's training positives.
pub fn build_candidates<R: Rng + ?Sized>(
    data: &SplitDataset,
    user: usize,
    size: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    sample_candidates(
        data.dataset.n_items_target,
        &data.target_train_items[user],
        size,
        rng,
    )
}

/// `softmax(scores / tau)` with max subtraction.
pub fn softmax_with_temperature(scores: &[f64], tau: f64) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = scores.iter().map(|s| ((s - max) / tau).exp()).collect();
    let z: f64 = p.iter().sum();
    for x in &mut p {
        *x /= z;
    }
    p
}

pub fn sampling_distribution(backbone: &Backbone, user: usize, candidates: &[usize], tau: f64) -> Vec<f64> {
    let scores: Vec<f64> = candidates.iter().map(|&i| backbone.score_unchecked(user, i)).collect();
    softmax_with_temperature(&scores, tau)
}

/// Inverse-CDF draw of an index from `probs`.
pub fn draw_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if r < acc {
            return k;
        }
    }
    probs.len() - 1
}

/// Temperature for `user`: `None` while no smoothed losses exist yet, which
/// means uniform sampling over the candidates.
pub fn user_temperature(tracker: &GroupLossTracker, group: Group, epsilon: f64) -> Result<Option<f64>> {
    if tracker.epochs() == 0 {
        return Ok(None);
    }
    Ok(Some(temperature(tracker.alpha(group)?, epsilon)))
}

/// Draws one negative from a fresh candidate set. With `tau = None` the draw
/// is uniform over the candidates.
pub fn draw_negative<R: Rng + ?Sized>(
    backbone: &Backbone,
    data: &SplitDataset,
    user: usize,
    candidate_size: usize,
    tau: Option<f64>,
    rng: &mut R,
) -> Result<usize> {
    let candidates = build_candidates(data, user, candidate_size, rng)?;
    if candidates.len() == 1 {
        return Ok(candidates[0]);
    }
    let k = match tau {
        None => rng.gen_range(0..candidates.len()),
        Some(tau) => draw_index(&sampling_distribution(backbone, user, &candidates, tau), rng),
    };
    Ok(candidates[k])
}

/// Group-aware negative for a target user.
pub fn sample_negative<R: Rng + ?Sized>(
    backbone: &Backbone,
    tracker: &GroupLossTracker,
    cfg: &SamplerConfig,
    data: &SplitDataset,
    user: usize,
    rng: &mut R,
) -> Result<usize> {
    let group = data.dataset.groups[user];
    let tau = user_temperature(tracker, group, cfg.epsilon)?;
    draw_negative(backbone, data, user, cfg.candidate_size, tau, rng)
}
