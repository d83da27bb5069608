//! Cross-domain information gain and its redistribution across groups.
//!
//! Three probability heads score a target interaction: from the source view
//! of the user, from the target view, and from a small network fusing both
//! views. The per-sample gain is the log-ratio of the fused head to the
//! product of the single-view heads; averaging it per group and penalising
//! the squared difference of the group means pushes the backbone towards
//! an even split of the cross-domain benefit.
//!
//! The fusing network is trained separately: from the user embeddings
//! captured at the start of an epoch it regresses the target embeddings
//! reached at the end of that epoch.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::backbone::{dot, Backbone, BackboneGrads, Fingerprint};
use crate::dataset::{Group, Pair};
use crate::error::{Error, Result};
use crate::optim::{AdamConfig, DenseAdam};

pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub lr: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 64],
            dropout: 0.2,
            lr: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `out x in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Feed-forward map `[u_t ; u_s] -> R^d` with ReLU hidden layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainEstimator {
    pub layers: Vec<Dense>,
    pub dropout: f64,
    pub dim: usize,
}

/// Activations kept for backpropagation.
struct Trace {
    /// Input and post-activation (after dropout) of each hidden layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Array2<f64>>,
    /// Dropout multipliers (0 or 1/(1-p)) of hidden layers, when active.
    masks: Vec<Option<Array2<f64>>>,
    output: Array2<f64>,
}

impl GainEstimator {
    /// Linear layers initialised `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new(dim: usize, cfg: &EstimatorConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut widths = vec![2 * dim];
        widths.extend(&cfg.hidden);
        widths.push(dim);
        let layers = widths
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let u = Uniform::new_inclusive(-bound, bound);
                Dense {
                    weight: Array2::from_shape_simple_fn((w[1], w[0]), || u.sample(&mut rng)),
                    bias: Array1::from_shape_simple_fn(w[1], || u.sample(&mut rng)),
                }
            })
            .collect();
        Self {
            layers,
            dropout: cfg.dropout,
            dim,
        }
    }

    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().unwrap();
        last.weight.fill(0.0);
        last.bias.fill(0.0);
    }

    /// Deterministic forward pass over rows of `x` (`n x 2d`).
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        self.trace(x, None).output
    }

    pub fn forward_one(&self, target: ArrayView1<'_, f64>, source: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut x = Array2::zeros((1, 2 * self.dim));
        x.slice_mut(s![0, ..self.dim]).assign(&target);
        x.slice_mut(s![0, self.dim..]).assign(&source);
        self.forward(x.view()).row(0).to_owned()
    }

    fn trace(&self, x: ArrayView2<'_, f64>, mut dropout_rng: Option<&mut ChaCha8Rng>) -> Trace {
        let n_hidden = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(n_hidden);
        let mut masks = Vec::with_capacity(n_hidden);
        let mut a = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weight.t());
            z += &layer.bias;
            inputs.push(a);
            if l == n_hidden {
                return Trace {
                    inputs,
                    pre,
                    masks,
                    output: z,
                };
            }
            let mut h = z.mapv(|v| v.max(0.0));
            let mask = match dropout_rng.as_deref_mut() {
                Some(rng) if self.dropout > 0.0 => {
                    let keep = 1.0 - self.dropout;
                    let m = Array2::from_shape_simple_fn(h.raw_dim(), || {
                        if rng.gen::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    });
                    h *= &m;
                    Some(m)
                }
                _ => None,
            };
            pre.push(z);
            masks.push(mask);
            a = h;
        }
        unreachable!("estimator has an output layer")
    }

    /// Propagates `grad_out` back to the input; also returns parameter
    /// gradients (`weight`, `bias` per layer) when `want_params`.
    fn backward(&self, trace: &Trace, grad_out: Array2<f64>, want_params: bool) -> (Array2<f64>, Vec<(Array2<f64>, Array1<f64>)>) {
        let mut g = grad_out;
        let mut param_grads = Vec::new();
        for l in (0..self.layers.len()).rev() {
            if l < self.layers.len() - 1 {
                if let Some(m) = &trace.masks[l] {
                    g *= m;
                }
                g.zip_mut_with(&trace.pre[l], |gv, &z| {
                    if z <= 0.0 {
                        *gv = 0.0
                    }
                });
            }
            if want_params {
                param_grads.push((g.t().dot(&trace.inputs[l]), g.sum_axis(Axis(0))));
            }
            g = g.dot(&self.layers[l].weight);
        }
        param_grads.reverse();
        (g, param_grads)
    }

    pub fn param_lens(&self) -> Vec<usize> {
        self.layers.iter().flat_map(|l| [l.weight.len(), l.bias.len()]).collect()
    }

    pub fn checksum(&self) -> u64 {
        let mut h = Fingerprint::default();
        for l in &self.layers {
            h.write_all(l.weight.iter());
            h.write_all(l.bias.iter());
        }
        h.finish()
    }

    fn apply_grads(&mut self, opt: &mut DenseAdam, grads: &[(Array2<f64>, Array1<f64>)]) -> Result<()> {
        let mut params: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            params.push(l.weight.as_slice_mut().unwrap());
            params.push(l.bias.as_slice_mut().unwrap());
        }
        let g: Vec<&[f64]> = grads
            .iter()
            .flat_map(|(w, b)| [w.as_slice().unwrap(), b.as_slice().unwrap()])
            .collect();
        opt.apply(&mut params, &g)
    }
}

pub fn new_estimator_optimizer(est: &GainEstimator, lr: f64) -> DenseAdam {
    DenseAdam::new(AdamConfig::with_lr(lr), &est.param_lens())
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Sigmoid clamped to `[1e-7, 1 - 1e-7]`, with `d ln p / dx` (zero when clamped).
#[inline]
fn clamped_sigmoid(x: f64) -> (f64, f64) {
    let p = sigmoid(x);
    if p < PROB_EPS {
        (PROB_EPS, 0.0)
    } else if p > 1.0 - PROB_EPS {
        (1.0 - PROB_EPS, 0.0)
    } else {
        (p, 1.0 - p)
    }
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// `sigma(u_s . i_t)` for an overlapping target user.
pub fn prob_source(b: &Backbone, user: usize, item: usize) -> Result<f64> {
    let u = b.user_source_vector(user)?;
    let i = b.item_target_vector(item)?;
    Ok(clamped_sigmoid(u.dot(&i)).0)
}

/// `sigma(u_t . i_t)`.
pub fn prob_target(b: &Backbone, user: usize, item: usize) -> Result<f64> {
    Ok(clamped_sigmoid(b.score(user, item)?).0)
}

/// `sigma(Estimator(u_t, u_s) . i_t)` with dropout disabled.
pub fn prob_joint(b: &Backbone, est: &GainEstimator, user: usize, item: usize) -> Result<f64> {
    let us = b.user_source_vector(user)?;
    let ut = b.user_target_vector(user)?;
    let i = b.item_target_vector(item)?;
    let fused = est.forward_one(ut, us);
    Ok(clamped_sigmoid(fused.dot(&i)).0)
}

/// Per-sample gain from the three head probabilities.
pub fn log_ratio(p_joint: f64, p_source: f64, p_target: f64) -> f64 {
    clamp_prob(p_joint).ln() - clamp_prob(p_source).ln() - clamp_prob(p_target).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GainReport {
    /// Mean gain per group; 0 for a group without samples.
    pub delta_i: [f64; 2],
    /// `(delta_i[0] - delta_i[1])^2`
    pub redistribution_loss: f64,
    pub n_samples: [usize; 2],
}

impl GainReport {
    pub fn from_sums(sums: [f64; 2], n: [usize; 2]) -> Self {
        let mean = |g: usize| if n[g] > 0 { sums[g] / n[g] as f64 } else { 0.0 };
        let delta_i = [mean(0), mean(1)];
        Self {
            delta_i,
            redistribution_loss: (delta_i[0] - delta_i[1]).powi(2),
            n_samples: n,
        }
    }

    pub fn both_groups_present(&self) -> bool {
        self.n_samples[0] > 0 && self.n_samples[1] > 0
    }

    /// The training penalty: the redistribution loss when both groups are
    /// represented, zero otherwise.
    pub fn penalty(&self) -> f64 {
        if self.both_groups_present() {
            self.redistribution_loss
        } else {
            0.0
        }
    }
}

struct HeadPass {
    samples: Vec<(usize, usize, Group)>,
    x: Array2<f64>,
}

fn gather(b: &Backbone, pairs: &[Pair], groups: &[Group]) -> HeadPass {
    let d = b.dim;
    let samples: Vec<(usize, usize, Group)> = pairs
        .iter()
        .filter(|(u, _)| b.is_overlapping(*u))
        .map(|&(u, i)| (u, i, groups[u]))
        .collect();
    let mut x = Array2::zeros((samples.len(), 2 * d));
    for (k, &(u, _, _)) in samples.iter().enumerate() {
        let tr = b.target_row(u);
        let sr = b.source_view_row(u).expect("filtered to overlapping users");
        x.slice_mut(s![k, ..d]).assign(&b.users.row(tr));
        x.slice_mut(s![k, d..]).assign(&b.users.row(sr));
    }
    HeadPass { samples, x }
}

/// Group-mean gains over the overlapping-user positives in `pairs`.
pub fn estimate_gain(b: &Backbone, est: &GainEstimator, pairs: &[Pair], groups: &[Group]) -> GainReport {
    let pass = gather(b, pairs, groups);
    let fused = est.forward(pass.x.view());
    let d = b.dim;
    let mut sums = [0.0; 2];
    let mut n = [0usize; 2];
    for (k, &(_, i, g)) in pass.samples.iter().enumerate() {
        let item = b.items_target.row(i);
        let item = item.as_slice().unwrap();
        let row = pass.x.row(k);
        let row = row.as_slice().unwrap();
        let pt = clamped_sigmoid(dot(&row[..d], item)).0;
        let ps = clamped_sigmoid(dot(&row[d..], item)).0;
        let pj = clamped_sigmoid(dot(fused.row(k).as_slice().unwrap(), item)).0;
        sums[g.index()] += pj.ln() - ps.ln() - pt.ln();
        n[g.index()] += 1;
    }
    GainReport::from_sums(sums, n)
}

/// Adds `weight * d penalty / d theta` for the backbone into `grads`, with
/// the estimator held fixed but differentiated through. Returns the report
/// the penalty was computed from; nothing is added when a group is absent.
pub fn accumulate_redistribution_grad(
    b: &Backbone,
    est: &GainEstimator,
    pairs: &[Pair],
    groups: &[Group],
    weight: f64,
    grads: &mut BackboneGrads,
) -> GainReport {
    let pass = gather(b, pairs, groups);
    let trace = est.trace(pass.x.view(), None);
    let fused = &trace.output;
    let d = b.dim;
    let n_s = pass.samples.len();

    let mut sums = [0.0; 2];
    let mut n = [0usize; 2];
    // d ln p / d logit for joint, source, target heads
    let mut slopes = Vec::with_capacity(n_s);
    for (k, &(_, i, g)) in pass.samples.iter().enumerate() {
        let item = b.items_target.row(i);
        let item = item.as_slice().unwrap();
        let row = pass.x.row(k);
        let row = row.as_slice().unwrap();
        let (pt, at) = clamped_sigmoid(dot(&row[..d], item));
        let (ps, as_) = clamped_sigmoid(dot(&row[d..], item));
        let (pj, aj) = clamped_sigmoid(dot(fused.row(k).as_slice().unwrap(), item));
        sums[g.index()] += pj.ln() - ps.ln() - pt.ln();
        n[g.index()] += 1;
        slopes.push((aj, as_, at));
    }
    let report = GainReport::from_sums(sums, n);
    if !report.both_groups_present() || weight == 0.0 {
        return report;
    }

    let diff = report.delta_i[0] - report.delta_i[1];
    let coef = [2.0 * diff / n[0] as f64, -2.0 * diff / n[1] as f64];
    let mut grad_fused = Array2::zeros((n_s, d));
    for (k, &(u, i, g)) in pass.samples.iter().enumerate() {
        let c = weight * coef[g.index()];
        let (aj, as_, at) = slopes[k];
        let item = b.items_target.row(i).to_owned();
        let item = item.as_slice().unwrap();
        let row = pass.x.row(k);
        let row = row.as_slice().unwrap();
        let f = fused.row(k);
        let f = f.as_slice().unwrap();

        grad_fused.row_mut(k).assign(&(&b.items_target.row(i) * (c * aj)));
        let gi = grads.items_target.row_mut(i);
        for j in 0..d {
            gi[j] += c * (aj * f[j] - as_ * row[d + j] - at * row[j]);
        }
        grads.users.add_scaled(b.target_row(u), -c * at, item);
        grads.users.add_scaled(b.source_view_row(u).unwrap(), -c * as_, item);
    }
    let (grad_x, _) = est.backward(&trace, grad_fused, false);
    for (k, &(u, _, _)) in pass.samples.iter().enumerate() {
        let gx = grad_x.row(k);
        let gx = gx.as_slice().unwrap();
        grads.users.add_scaled(b.target_row(u), 1.0, &gx[..d]);
        grads.users.add_scaled(b.source_view_row(u).unwrap(), 1.0, &gx[d..]);
    }
    report
}

/// User embeddings frozen at an epoch boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSnapshot {
    pub users: Array2<f64>,
}

impl EpochSnapshot {
    pub fn take(b: &Backbone) -> Self {
        Self { users: b.users.clone() }
    }

    /// Estimator inputs `[u_t ; u_s]` for `users`, from the snapshot.
    pub fn inputs(&self, b: &Backbone, users: &[usize]) -> Result<Array2<f64>> {
        let d = b.dim;
        let mut x = Array2::zeros((users.len(), 2 * d));
        for (k, &u) in users.iter().enumerate() {
            let sr = b.source_view_row(u)?;
            x.slice_mut(s![k, ..d]).assign(&self.users.row(b.target_row(u)));
            x.slice_mut(s![k, d..]).assign(&self.users.row(sr));
        }
        Ok(x)
    }
}

/// One sweep over `users` in mini-batches, regressing the live target
/// embeddings from the snapshot inputs. Returns the mean squared error
/// (summed over dimensions, averaged over users) seen during the sweep.
#[allow(clippy::too_many_arguments)]
pub fn estimator_step(
    est: &mut GainEstimator,
    snapshot: &EpochSnapshot,
    live: &Backbone,
    users: &[usize],
    opt: &mut DenseAdam,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if users.is_empty() {
        return Err(Error::NoOverlap);
    }
    let mut order = users.to_vec();
    order.shuffle(rng);
    let mut total = 0.0;
    for chunk in order.chunks(batch_size.max(1)) {
        let x = snapshot.inputs(live, chunk)?;
        let y = live.users.select(Axis(0), &chunk.iter().map(|&u| live.target_row(u)).collect::<Vec<_>>());
        let trace = est.trace(x.view(), Some(rng));
        let resid = &trace.output - &y;
        total += resid.iter().map(|r| r * r).sum::<f64>();
        let grad_out = resid * (2.0 / chunk.len() as f64);
        let (_, grads) = est.backward(&trace, grad_out, true);
        est.apply_grads(opt, &grads)?;
    }
    Ok(total / users.len() as f64)
}

/// Squared-error loss of the estimator on `users` without dropout.
pub fn estimator_loss(est: &GainEstimator, snapshot: &EpochSnapshot, live: &Backbone, users: &[usize]) -> Result<f64> {
    if users.is_empty() {
        return Err(Error::NoOverlap);
    }
    let x = snapshot.inputs(live, users)?;
    let y = live.users.select(Axis(0), &users.iter().map(|&u| live.target_row(u)).collect::<Vec<_>>());
    let resid = est.forward(x.view()) - y;
    Ok(resid.iter().map(|r| r * r).sum::<f64>() / users.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::SharingMode;
    use crate::dataset::{generate_synthetic, CrossDomainDataset, SynthConfig};
    use ndarray::array;

    fn world(mode: SharingMode) -> (CrossDomainDataset, Backbone) {
        let ds = generate_synthetic(&SynthConfig {
            n_users_source: 20,
            n_users_target: 24,
            n_items_source: 15,
            n_items_target: 12,
            latent_dim: 3,
            interactions_per_user: 3,
            rng_seed: 4,
            ..SynthConfig::default()
        })
        .unwrap();
        let b = Backbone::init(&ds, 4, mode, 8).unwrap();
        (ds, b)
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        assert!((clamped_sigmoid(11.0).0 - 1.0 / (1.0 + (-11f64).exp())).abs() < 1e-15);
        assert!((clamped_sigmoid(11.0).0 - 0.9999833).abs() < 1e-7);
        assert_eq!(clamped_sigmoid(50.0).0, 1.0 - PROB_EPS);
        assert_eq!(clamped_sigmoid(-50.0).0, PROB_EPS);
    }

    #[test]
    fn heads_on_configured_vectors() {
        let (ds, mut b) = world(SharingMode::SharedUser);
        let t = ds.overlapping_users()[0];
        let r = b.target_row(t);
        b.users.row_mut(r).assign(&array![1.0, 2.0, 0.0, 0.0]);
        b.items_target.row_mut(0).assign(&array![3.0, 4.0, 0.0, 0.0]);
        b.items_target.row_mut(1).assign(&array![-2.0, 1.0, 0.0, 0.0]);
        assert!((prob_target(&b, t, 0).unwrap() - sigmoid(11.0)).abs() < 1e-15);
        assert_eq!(prob_target(&b, t, 1).unwrap(), 0.5);
        // shared rows: the source head sees the same vector
        assert_eq!(prob_source(&b, t, 0).unwrap(), prob_target(&b, t, 0).unwrap());
        let lone = (0..ds.n_users_target).find(|&u| ds.overlap[u].is_none()).unwrap();
        assert!(matches!(prob_source(&b, lone, 0), Err(Error::NotOverlapping(_))));
        let est = GainEstimator::new(4, &EstimatorConfig::default(), 1);
        assert!(prob_joint(&b, &est, lone, 0).is_err());
    }

    #[test]
    fn zero_output_layer_gives_half() {
        let (ds, b) = world(SharingMode::Dual);
        let mut est = GainEstimator::new(4, &EstimatorConfig::default(), 1);
        est.zero_output_layer();
        for t in ds.overlapping_users() {
            for i in 0..ds.n_items_target {
                assert_eq!(prob_joint(&b, &est, t, i).unwrap(), 0.5);
            }
        }
    }

    #[test]
    fn tiny_network_matches_hand_forward() {
        // d = 2: input 4 -> hidden 2 (ReLU) -> output 2
        let est = GainEstimator {
            layers: vec![
                Dense {
                    weight: array![[1.0, 0.0, -1.0, 0.5], [0.0, 1.0, 1.0, -2.0]],
                    bias: array![0.1, -0.2],
                },
                Dense {
                    weight: array![[1.0, -1.0], [0.5, 2.0]],
                    bias: array![0.0, 0.3],
                },
            ],
            dropout: 0.2,
            dim: 2,
        };
        let out = est.forward_one(array![0.4, -0.3].view(), array![0.2, 0.6].view());
        // hidden pre: [0.4 - 0.2 + 0.3 + 0.1, -0.3 + 0.2 - 1.2 - 0.2] = [0.6, -1.5] -> relu [0.6, 0]
        // out: [0.6, 0.3 + 0.3] = [0.6, 0.6]
        assert!((out[0] - 0.6).abs() < 1e-12 && (out[1] - 0.6).abs() < 1e-12);
        assert_eq!(est.forward_one(array![0.4, -0.3].view(), array![0.2, 0.6].view()), out);
    }

    #[test]
    fn gain_from_head_values() {
        assert!((log_ratio(0.9, 0.6, 0.5) - 3f64.ln()).abs() < 1e-12);
        assert!(log_ratio(0.3 * 0.4, 0.3, 0.4).abs() < 1e-12);
        assert!(log_ratio(1.0, 0.0, 1.0).is_finite());
        let r = GainReport::from_sums([1.0, 2.0], [2, 4]);
        assert_eq!(r.delta_i, [0.5, 0.5]);
        assert_eq!(r.redistribution_loss, 0.0);
        let r = GainReport::from_sums([1.0, 0.0], [1, 0]);
        assert_eq!(r.delta_i, [1.0, 0.0]);
        assert_eq!(r.penalty(), 0.0);
        assert_eq!(r.redistribution_loss, 1.0);
    }

    #[test]
    fn estimate_gain_matches_head_functions() {
        let (ds, b) = world(SharingMode::Dual);
        let est = GainEstimator::new(4, &EstimatorConfig::default(), 3);
        let report = estimate_gain(&b, &est, &ds.interactions_target, &ds.groups);
        let mut sums = [0.0; 2];
        let mut n = [0; 2];
        for &(u, i) in &ds.interactions_target {
            if ds.overlap[u].is_none() {
                continue;
            }
            let g = ds.groups[u].index();
            sums[g] += log_ratio(
                prob_joint(&b, &est, u, i).unwrap(),
                prob_source(&b, u, i).unwrap(),
                prob_target(&b, u, i).unwrap(),
            );
            n[g] += 1;
        }
        assert_eq!(report.n_samples, n);
        for g in 0..2 {
            assert!((report.delta_i[g] - sums[g] / n[g] as f64).abs() < 1e-12);
        }
        assert_eq!(report.redistribution_loss, (report.delta_i[0] - report.delta_i[1]).powi(2));
    }

    #[test]
    fn shared_mode_gain_is_finite() {
        let (ds, mut b) = world(SharingMode::SharedUser);
        b.users *= 40.0;
        let est = GainEstimator::new(4, &EstimatorConfig::default(), 3);
        let r = estimate_gain(&b, &est, &ds.interactions_target, &ds.groups);
        assert!(r.delta_i.iter().all(|x| x.is_finite()));
        assert!(r.redistribution_loss.is_finite());
    }

    #[test]
    fn estimator_step_requires_overlap() {
        let (_, b) = world(SharingMode::Dual);
        let mut est = GainEstimator::new(4, &EstimatorConfig::default(), 3);
        let mut opt = new_estimator_optimizer(&est, 1e-3);
        let snap = EpochSnapshot::take(&b);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            estimator_step(&mut est, &snap, &b, &[], &mut opt, 8, &mut rng),
            Err(Error::NoOverlap)
        ));
    }
}
