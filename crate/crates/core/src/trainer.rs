//! BPR training with group-aware negatives, the redistribution penalty, and
//! alternating estimator updates.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{Backbone, BackboneGrads, SharingMode, Snapshot};
use crate::dataset::{CrossDomainDataset, Domain, Group, Pair, SplitDataset};
use crate::error::{Error, Result};
use crate::gain::{
    accumulate_redistribution_grad, estimator_step, new_estimator_optimizer, EpochSnapshot, EstimatorConfig,
    GainEstimator, GainReport,
};
use crate::kv::KeyValues;
use crate::metrics::{evaluate, Stage};
use crate::optim::{AdamConfig, DenseAdam, SparseAdam};
use crate::sampler::{draw_negative, sample_candidates, user_temperature, GroupLossTracker, SamplerConfig};
use crate::seed::{component_rng, derive_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    pub use_alpha: bool,
    pub use_fair_sampling: bool,
    pub use_redistribution: bool,
    pub use_estimator_loss: bool,
}

impl AblationFlags {
    pub const FULL: Self = Self {
        use_alpha: true,
        use_fair_sampling: true,
        use_redistribution: true,
        use_estimator_loss: true,
    };

    /// Plain BPR training with uniform negatives.
    pub const NONE: Self = Self {
        use_alpha: false,
        use_fair_sampling: false,
        use_redistribution: false,
        use_estimator_loss: false,
    };
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self::FULL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2_reg: f64,
    pub epochs: usize,
    pub gamma: f64,
    pub sampler: SamplerConfig,
    pub flags: AblationFlags,
    pub seed: u64,
    /// Epochs without a validation NDCG@10 improvement before stopping.
    pub patience: usize,
    pub dim: usize,
    pub mode: SharingMode,
    pub estimator: EstimatorConfig,
    /// Train on source positives too; off for target-only baselines.
    pub use_source: bool,
    /// Hash the frozen partition around every step and fail on any change.
    pub audit_partition: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 2048,
            l2_reg: 1e-4,
            epochs: 30,
            gamma: 1.0,
            sampler: SamplerConfig::default(),
            flags: AblationFlags::FULL,
            seed: 0,
            patience: 10,
            dim: 32,
            mode: SharingMode::SharedUser,
            estimator: EstimatorConfig::default(),
            use_source: true,
            audit_partition: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive(self.learning_rate, "learning_rate")?;
        positive(self.estimator.lr, "estimator learning rate")?;
        if self.batch_size == 0 || self.dim == 0 {
            return Err(Error::Config("batch_size and dim must be at least 1".into()));
        }
        if !(self.l2_reg >= 0.0 && self.l2_reg.is_finite()) {
            return Err(Error::Config(format!("l2_reg must be non-negative, got {}", self.l2_reg)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        if !(0.0..1.0).contains(&self.estimator.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.estimator.dropout)));
        }
        self.sampler.validate()
    }

    pub fn apply_kv(&mut self, kv: &KeyValues) -> Result<()> {
        kv.apply("learning_rate", &mut self.learning_rate)?;
        kv.apply("lr", &mut self.learning_rate)?;
        kv.apply("batch_size", &mut self.batch_size)?;
        kv.apply("l2_reg", &mut self.l2_reg)?;
        kv.apply("epochs", &mut self.epochs)?;
        kv.apply("gamma", &mut self.gamma)?;
        kv.apply("epsilon", &mut self.sampler.epsilon)?;
        kv.apply("candidate_size", &mut self.sampler.candidate_size)?;
        kv.apply("negatives_per_positive", &mut self.sampler.negatives_per_positive)?;
        kv.apply("use_alpha", &mut self.flags.use_alpha)?;
        kv.apply("use_fair_sampling", &mut self.flags.use_fair_sampling)?;
        kv.apply("use_redistribution", &mut self.flags.use_redistribution)?;
        kv.apply("use_estimator_loss", &mut self.flags.use_estimator_loss)?;
        kv.apply("seed", &mut self.seed)?;
        kv.apply("patience", &mut self.patience)?;
        kv.apply("dim", &mut self.dim)?;
        kv.apply("mode", &mut self.mode)?;
        kv.apply("estimator_lr", &mut self.estimator.lr)?;
        kv.apply("dropout", &mut self.estimator.dropout)?;
        if let Some(h) = kv.get_list::<usize>("estimator_hidden")? {
            self.estimator.hidden = h;
        }
        kv.apply("use_source", &mut self.use_source)?;
        kv.apply("audit_partition", &mut self.audit_partition)?;
        Ok(())
    }
}

/// One BPR triple tagged with its domain. For source samples `user` is a
/// source-domain user index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub domain: Domain,
    pub user: usize,
    pub pos: usize,
    pub neg: usize,
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid_of(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_sample(b: &Backbone, s: &Sample) -> Result<(usize, crate::backbone::Table)> {
    use crate::backbone::Table;
    let (n_users, n_items, table, what) = match s.domain {
        Domain::Target => (b.n_users_target(), b.n_items_target(), Table::ItemsTarget, "target"),
        Domain::Source => (b.n_users_source(), b.n_items_source(), Table::ItemsSource, "source"),
    };
    if s.user >= n_users {
        return Err(Error::OutOfRange { what: if what == "target" { "target user" } else { "source user" }, id: s.user, size: n_users });
    }
    for i in [s.pos, s.neg] {
        if i >= n_items {
            return Err(Error::OutOfRange { what: if what == "target" { "target item" } else { "source item" }, id: i, size: n_items });
        }
    }
    let row = match s.domain {
        Domain::Target => b.target_row(s.user),
        Domain::Source => b.source_row(s.user),
    };
    Ok((row, table))
}

/// `-ln sigma(x_pos - x_neg) + l2 (|u|^2 + |i+|^2 + |i-|^2)`.
pub fn bpr_loss(b: &Backbone, s: &Sample, l2: f64) -> Result<f64> {
    let (row, table) = check_sample(b, s)?;
    let items = b.table(table);
    let u = b.users.row(row);
    let (ip, ineg) = (items.row(s.pos), items.row(s.neg));
    let x = u.dot(&ip) - u.dot(&ineg);
    Ok(softplus(-x) + l2 * (u.dot(&u) + ip.dot(&ip) + ineg.dot(&ineg)))
}

/// Adds `scale * d bpr_loss / d theta` into `grads`; returns the loss.
pub fn bpr_loss_grad(b: &Backbone, s: &Sample, l2: f64, scale: f64, grads: &mut BackboneGrads) -> Result<f64> {
    use crate::backbone::Table;
    let (row, table) = check_sample(b, s)?;
    let items = b.table(table);
    let u = b.users.row(row);
    let u = u.as_slice().unwrap();
    let ip = items.row(s.pos);
    let ip = ip.as_slice().unwrap();
    let ineg = items.row(s.neg);
    let ineg = ineg.as_slice().unwrap();
    let d = u.len();

    let mut x = 0.0;
    let mut norms = 0.0;
    for k in 0..d {
        x += u[k] * (ip[k] - ineg[k]);
        norms += u[k] * u[k] + ip[k] * ip[k] + ineg[k] * ineg[k];
    }
    let loss = softplus(-x) + l2 * norms;
    let w = -sigmoid_of(-x) * scale;
    let r = 2.0 * l2 * scale;

    let gu = grads.users.row_mut(row);
    for k in 0..d {
        gu[k] += w * (ip[k] - ineg[k]) + r * u[k];
    }
    let gi = match table {
        Table::ItemsSource => &mut grads.items_source,
        _ => &mut grads.items_target,
    };
    let gp = gi.row_mut(s.pos);
    for k in 0..d {
        gp[k] += w * u[k] + r * ip[k];
    }
    let gn = gi.row_mut(s.neg);
    for k in 0..d {
        gn[k] += -w * u[k] + r * ineg[k];
    }
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    /// `rec + gamma * redist`.
    pub total: f64,
    /// Mean BPR loss over the batch samples.
    pub rec: f64,
    /// Redistribution penalty; zero when not computed.
    pub redist: f64,
    pub gain: Option<GainReport>,
    pub sample_losses: Vec<f64>,
}

/// Loss of one mini-batch and its gradient with respect to the backbone,
/// everything evaluated at the current parameters. The penalty is computed
/// on the distinct target positives of the batch when `with_penalty`.
#[allow(clippy::too_many_arguments)]
pub fn batch_objective(
    b: &Backbone,
    est: &GainEstimator,
    samples: &[Sample],
    groups: &[Group],
    gamma: f64,
    with_penalty: bool,
    l2: f64,
    grads: &mut BackboneGrads,
) -> Result<BatchLoss> {
    if samples.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let scale = 1.0 / samples.len() as f64;
    let mut sample_losses = Vec::with_capacity(samples.len());
    for s in samples {
        sample_losses.push(bpr_loss_grad(b, s, l2, scale, grads)?);
    }
    let rec = sample_losses.iter().sum::<f64>() * scale;
    let (redist, gain) = if with_penalty {
        let mut pairs: Vec<Pair> = samples
            .iter()
            .filter(|s| s.domain == Domain::Target)
            .map(|s| (s.user, s.pos))
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        let report = accumulate_redistribution_grad(b, est, &pairs, groups, gamma, grads);
        (report.penalty(), Some(report))
    } else {
        (0.0, None)
    };
    Ok(BatchLoss {
        total: rec + gamma * redist,
        rec,
        redist,
        gain,
        sample_losses,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub fair_sampler_calls: u64,
    pub uniform_draws: u64,
    pub train_steps: u64,
    pub estimator_steps: u64,
    pub partition_checks: u64,
}

/// Everything that evolves during training.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub backbone: Backbone,
    pub estimator: GainEstimator,
    pub tracker: GroupLossTracker,
    pub adam: SparseAdam,
    pub estimator_opt: DenseAdam,
    pub epoch: usize,
    pub counters: Counters,
    rng: ChaCha8Rng,
    estimator_rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(ds: &CrossDomainDataset, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let backbone = Backbone::init(ds, cfg.dim, cfg.mode, derive_seed(cfg.seed, "backbone"))?;
        let estimator = GainEstimator::new(cfg.dim, &cfg.estimator, derive_seed(cfg.seed, "estimator"));
        Ok(Self {
            adam: SparseAdam::new(AdamConfig::with_lr(cfg.learning_rate), &backbone),
            estimator_opt: new_estimator_optimizer(&estimator, cfg.estimator.lr),
            backbone,
            estimator,
            tracker: GroupLossTracker::default(),
            epoch: 0,
            counters: Counters::default(),
            rng: component_rng(cfg.seed, "train/sampling"),
            estimator_rng: component_rng(cfg.seed, "train/estimator"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub total: f64,
    pub rec: f64,
    pub redist: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub batches: Vec<BatchRecord>,
    pub loss_total: f64,
    pub loss_rec: f64,
    pub loss_redist: f64,
    /// Sum of the per-sample BPR losses over the epoch.
    pub sample_loss_sum: f64,
    pub n_samples: usize,
    pub ema: [f64; 2],
    pub alpha: Option<[f64; 2]>,
    /// Pooled group gains over all penalty evaluations of the epoch.
    pub gain: Option<[f64; 2]>,
    pub estimator_loss: Option<f64>,
    pub elapsed: Duration,
}

fn uniform_negative(n_items: usize, positives: &[usize], rng: &mut ChaCha8Rng) -> Result<usize> {
    Ok(sample_candidates(n_items, positives, 1, rng)?[0])
}

/// One pass over the shuffled training positives followed by the tracker
/// update and, when enabled, one estimator sweep. `trace` receives every
/// triple in the order it was trained on.
pub fn train_epoch(
    state: &mut TrainState,
    data: &SplitDataset,
    cfg: &TrainConfig,
    mut trace: Option<&mut Vec<Sample>>,
) -> Result<EpochStats> {
    let start = Instant::now();
    let flags = cfg.flags;
    let groups = &data.dataset.groups;
    let snapshot = flags.use_estimator_loss.then(|| EpochSnapshot::take(&state.backbone));

    let mut taus = [None; 2];
    if flags.use_fair_sampling {
        for g in Group::ALL {
            taus[g.index()] = if flags.use_alpha {
                user_temperature(&state.tracker, g, cfg.sampler.epsilon)?
            } else {
                Some(1.0)
            };
        }
    }

    let mut pool: Vec<(Domain, usize, usize)> = Vec::new();
    if cfg.use_source {
        pool.extend(data.source_train.iter().map(|&(u, i)| (Domain::Source, u, i)));
    }
    pool.extend(data.target_train.iter().map(|&(u, i)| (Domain::Target, u, i)));
    if pool.is_empty() {
        return Err(Error::Data("no training positives".into()));
    }
    pool.shuffle(&mut state.rng);

    let mut grads = BackboneGrads::for_backbone(&state.backbone);
    let mut batches = Vec::new();
    let mut sample_loss_sum = 0.0;
    let mut n_samples = 0;
    let mut gain_sums = [0.0; 2];
    let mut gain_n = [0usize; 2];
    let mut samples = Vec::with_capacity(cfg.batch_size * cfg.sampler.negatives_per_positive);

    for (batch_idx, chunk) in pool.chunks(cfg.batch_size).enumerate() {
        samples.clear();
        for &(domain, user, pos) in chunk {
            for _ in 0..cfg.sampler.negatives_per_positive {
                let neg = match domain {
                    Domain::Source => {
                        state.counters.uniform_draws += 1;
                        uniform_negative(data.dataset.n_items_source, &data.source_train_items[user], &mut state.rng)?
                    }
                    Domain::Target if flags.use_fair_sampling => {
                        state.counters.fair_sampler_calls += 1;
                        let tau = taus[groups[user].index()];
                        draw_negative(&state.backbone, data, user, cfg.sampler.candidate_size, tau, &mut state.rng)?
                    }
                    Domain::Target => {
                        state.counters.uniform_draws += 1;
                        uniform_negative(data.dataset.n_items_target, &data.target_train_items[user], &mut state.rng)?
                    }
                };
                samples.push(Sample { domain, user, pos, neg });
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.extend_from_slice(&samples);
        }

        grads.clear();
        let est_hash = cfg.audit_partition.then(|| state.estimator.checksum());
        let loss = batch_objective(
            &state.backbone,
            &state.estimator,
            &samples,
            groups,
            cfg.gamma,
            flags.use_redistribution,
            cfg.l2_reg,
            &mut grads,
        )?;
        if !loss.total.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite loss at epoch {} batch {}: rec {}, redist {}",
                state.epoch, batch_idx, loss.rec, loss.redist
            )));
        }
        state.adam.apply(&mut state.backbone, &grads)?;
        state.counters.train_steps += 1;
        if let Some(h) = est_hash {
            if state.estimator.checksum() != h {
                return Err(Error::Contract(format!("train step {} changed the estimator", state.counters.train_steps)));
            }
            state.counters.partition_checks += 1;
        }

        for (s, &l) in samples.iter().zip(&loss.sample_losses) {
            if s.domain == Domain::Target {
                state.tracker.accumulate_sample_loss(groups[s.user], l)?;
            }
        }
        if let Some(r) = &loss.gain {
            for g in 0..2 {
                gain_sums[g] += r.delta_i[g] * r.n_samples[g] as f64;
                gain_n[g] += r.n_samples[g];
            }
        }
        sample_loss_sum += loss.sample_losses.iter().sum::<f64>();
        n_samples += samples.len();
        batches.push(BatchRecord {
            total: loss.total,
            rec: loss.rec,
            redist: loss.redist,
        });
    }

    let ema = state.tracker.end_epoch()?;
    let alpha = match (state.tracker.alpha(Group::G0), state.tracker.alpha(Group::G1)) {
        (Ok(a0), Ok(a1)) => Some([a0, a1]),
        _ => None,
    };

    let mut estimator_loss = None;
    if let Some(snapshot) = snapshot {
        let users: Vec<usize> = (0..data.dataset.n_users_target)
            .filter(|&u| state.backbone.is_overlapping(u))
            .collect();
        let bb_hash = cfg.audit_partition.then(|| state.backbone.checksum());
        estimator_loss = Some(estimator_step(
            &mut state.estimator,
            &snapshot,
            &state.backbone,
            &users,
            &mut state.estimator_opt,
            cfg.batch_size,
            &mut state.estimator_rng,
        )?);
        state.counters.estimator_steps += 1;
        if let Some(h) = bb_hash {
            if state.backbone.checksum() != h {
                return Err(Error::Contract(format!("estimator step at epoch {} changed the backbone", state.epoch)));
            }
            state.counters.partition_checks += 1;
        }
    }

    let nb = batches.len() as f64;
    let mean = |f: fn(&BatchRecord) -> f64| batches.iter().map(f).sum::<f64>() / nb;
    let stats = EpochStats {
        epoch: state.epoch,
        loss_total: mean(|b| b.total),
        loss_rec: mean(|b| b.rec),
        loss_redist: mean(|b| b.redist),
        batches,
        sample_loss_sum,
        n_samples,
        ema,
        alpha,
        gain: (gain_n[0] > 0 && gain_n[1] > 0)
            .then(|| [gain_sums[0] / gain_n[0] as f64, gain_sums[1] / gain_n[1] as f64]),
        estimator_loss,
        elapsed: start.elapsed(),
    };
    state.epoch += 1;
    Ok(stats)
}

/// One run-log line. Missing or non-finite values serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss_total: Option<f64>,
    pub loss_rec: Option<f64>,
    pub loss_redist: Option<f64>,
    pub ema_g0: Option<f64>,
    pub ema_g1: Option<f64>,
    pub alpha_g0: Option<f64>,
    pub gain_g0: Option<f64>,
    pub gain_g1: Option<f64>,
    pub estimator_loss: Option<f64>,
    pub val_ndcg10: Option<f64>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl EpochLog {
    pub fn new(stats: &EpochStats, val_ndcg10: f64) -> Self {
        Self {
            epoch: stats.epoch,
            loss_total: finite(stats.loss_total),
            loss_rec: finite(stats.loss_rec),
            loss_redist: finite(stats.loss_redist),
            ema_g0: finite(stats.ema[0]),
            ema_g1: finite(stats.ema[1]),
            alpha_g0: stats.alpha.and_then(|a| finite(a[0])),
            gain_g0: stats.gain.and_then(|g| finite(g[0])),
            gain_g1: stats.gain.and_then(|g| finite(g[1])),
            estimator_loss: stats.estimator_loss.and_then(finite),
            val_ndcg10: finite(val_ndcg10),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// State after the epoch with the best validation NDCG@10 (the initial
    /// state when no epoch ran).
    pub best: TrainState,
    pub best_epoch: Option<usize>,
    pub best_val_ndcg10: f64,
    /// State after the last epoch that ran.
    pub last: TrainState,
    pub log: Vec<EpochLog>,
    pub stats: Vec<EpochStats>,
}

/// Runs up to `cfg.epochs` epochs with early stopping on target validation
/// NDCG@10.
pub fn train(data: &SplitDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut state = TrainState::new(&data.dataset, cfg)?;
    let mut best = state.clone();
    let mut best_epoch = None;
    let mut best_val = f64::NEG_INFINITY;
    let mut since_best = 0;
    let mut log = Vec::new();
    let mut all_stats = Vec::new();
    for _ in 0..cfg.epochs {
        let stats = train_epoch(&mut state, data, cfg, None)?;
        let val = evaluate(&state.backbone, data, Stage::Validation, &[10])?.overall("NDCG@10");
        log.push(EpochLog::new(&stats, val));
        all_stats.push(stats);
        if val > best_val || best_epoch.is_none() {
            best_val = val;
            best_epoch = Some(state.epoch - 1);
            best = state.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_val_ndcg10: best_val,
        last: state,
        log,
        stats: all_stats,
    })
}

pub fn write_run_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut out = Vec::new();
    for line in log {
        serde_json::to_writer(&mut out, line).map_err(|e| Error::Data(e.to_string()))?;
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_run_log(path: &Path) -> Result<Vec<EpochLog>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

pub const CHECKPOINT_SNAPSHOT: &str = "checkpoint.cdfa";
pub const CHECKPOINT_SIDECAR: &str = "checkpoint.json";

/// Optimizer-independent training state stored next to the checkpoint
/// snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: Option<usize>,
    pub val_ndcg10: Option<f64>,
    pub mode: SharingMode,
    pub dim: usize,
    pub backbone_steps: u64,
    pub tracker: GroupLossTracker,
    pub estimator: GainEstimator,
    pub estimator_optimizer: DenseAdam,
    pub counters: Counters,
    pub config: TrainConfig,
}

pub fn write_checkpoint(dir: &Path, outcome: &TrainOutcome, cfg: &TrainConfig) -> Result<()> {
    let s = &outcome.best;
    s.backbone.to_snapshot().write(&dir.join(CHECKPOINT_SNAPSHOT))?;
    let meta = CheckpointMeta {
        epoch: outcome.best_epoch,
        val_ndcg10: finite(outcome.best_val_ndcg10),
        mode: s.backbone.mode,
        dim: s.backbone.dim,
        backbone_steps: s.adam.step,
        tracker: s.tracker.clone(),
        estimator: s.estimator.clone(),
        estimator_optimizer: s.estimator_opt.clone(),
        counters: s.counters,
        config: cfg.clone(),
    };
    let path = dir.join(CHECKPOINT_SIDECAR);
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Data(e.to_string()))?;
    fs::File::create(&path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|e| Error::io(&path, e))
}

pub fn read_checkpoint(dir: &Path, ds: &CrossDomainDataset) -> Result<(Backbone, CheckpointMeta)> {
    let path = dir.join(CHECKPOINT_SIDECAR);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.clone(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let snap = Snapshot::read(&dir.join(CHECKPOINT_SNAPSHOT))?;
    let backbone = Backbone::from_snapshot(&snap, ds, meta.mode)?;
    Ok((backbone, meta))
}
