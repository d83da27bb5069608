use std::fs;
use std::path::Path;

use ndarray::Array1;
use serde::Serialize;

use cdfa::backbone::Snapshot;
use cdfa::dataset::{generate_world, load_attributes, write_attributes, write_interactions, CrossDomainDataset, IdMaps};
use cdfa::kv::KeyValues;
use cdfa::metrics::{evaluate, EvaluationReport, Stage};
use cdfa::theory::{lipschitz_estimate, transfer_bound, GroupClouds, W1Config};
use cdfa::trainer::{read_checkpoint, write_checkpoint, write_run_log, TrainConfig};

use crate::config::{
    load_key_values, DataPaths, DataSource, RunConfig, ATTRIBUTES_FILE, CONFIG_FILE, MANIFEST_FILE, SOURCE_FILE,
    TARGET_FILE,
};
use crate::error::{CliError, CliResult};
use crate::experiment::{ablation_csv, run_variant, set_axis, sweep_csv};
use crate::{Cli, Command, DataArgs, GlobalArgs, TheoryArgs, Variant};

pub const ID_MAP_FILE: &str = "id_map.json";

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    cdfa::Error::io(path, e).into()
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| cdfa::Error::Data(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

fn create_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn paths(d: &DataArgs) -> DataPaths {
    DataPaths {
        data_dir: d.data.clone(),
        source: d.source.clone(),
        target: d.target.clone(),
        attrs: d.attrs.clone(),
    }
}

fn run_config(g: &GlobalArgs, data: &DataArgs, base: Option<KeyValues>) -> CliResult<RunConfig> {
    let kv = load_key_values(g.config.as_deref(), &g.sets)?;
    let kv = match base {
        Some(b) => b.merged(&kv),
        None => kv,
    };
    RunConfig::from_key_values(kv, &paths(data), g.seed)
}

/// Records the effective training flags so equivalent invocations write
/// identical configuration files.
fn resolved_kv(kv: &KeyValues, cfg: &TrainConfig) -> KeyValues {
    let mut kv = kv.clone();
    kv.set("use_alpha", cfg.flags.use_alpha);
    kv.set("use_fair_sampling", cfg.flags.use_fair_sampling);
    kv.set("use_redistribution", cfg.flags.use_redistribution);
    kv.set("use_estimator_loss", cfg.flags.use_estimator_loss);
    kv.set("use_source", cfg.use_source);
    kv.set("epochs", cfg.epochs);
    kv.set("seed", cfg.seed);
    kv
}

macro_rules! say {
    ($quiet:expr, $($arg:tt)*) => {
        if !$quiet {
            println!($($arg)*);
        }
    };
}

pub fn dispatch(cli: Cli) -> CliResult<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Synth => cmd_synth(g),
        Command::Train { data, ablate, epochs } => cmd_train(g, data, *ablate, *epochs),
        Command::Eval { data, checkpoint, baseline } => cmd_eval(g, data, checkpoint, baseline.as_deref()),
        Command::Ablate { data } => cmd_ablate(g, data),
        Command::Sweep { data, axis, values } => cmd_sweep(g, data, *axis, values),
        Command::Theory(args) => cmd_theory(g, args),
    }
}

#[derive(Debug, Serialize)]
struct DomainStats {
    users: usize,
    items: usize,
    interactions: usize,
    density: f64,
}

#[derive(Debug, Serialize)]
struct Manifest {
    files: [&'static str; 3],
    synth: cdfa::dataset::SynthConfig,
    source: DomainStats,
    target: DomainStats,
    overlapping_users: usize,
    target_group_counts: [usize; 2],
}

fn domain_stats(users: usize, items: usize, interactions: usize) -> DomainStats {
    DomainStats {
        users,
        items,
        interactions,
        density: interactions as f64 / (users * items) as f64,
    }
}

fn cmd_synth(g: &GlobalArgs) -> CliResult<()> {
    let rc = run_config(g, &DataArgs::default(), None)?;
    let DataSource::Synthetic(synth) = &rc.data else {
        unreachable!("no data paths given")
    };
    let world = generate_world(synth)?;
    let ds = &world.dataset;
    create_out(&g.out)?;
    let ids = &ds.ids;
    write_interactions(&g.out.join(SOURCE_FILE), &ds.interactions_source, &ids.users_source, &ids.items_source)?;
    write_interactions(&g.out.join(TARGET_FILE), &ds.interactions_target, &ids.users_target, &ids.items_target)?;

    let mut rows: Vec<(String, String)> = Vec::new();
    for (u, grp) in ds.groups.iter().enumerate() {
        rows.push((ids.users_target[u].clone(), grp.label().to_string()));
    }
    for (s, grp) in ds.groups_source.iter().enumerate() {
        if ds.overlap.iter().any(|o| *o == Some(s)) {
            continue;
        }
        if let Some(grp) = grp {
            rows.push((ids.users_source[s].clone(), grp.label().to_string()));
        }
    }
    write_attributes(&g.out.join(ATTRIBUTES_FILE), &rows)?;

    let manifest = Manifest {
        files: [SOURCE_FILE, TARGET_FILE, ATTRIBUTES_FILE],
        synth: synth.clone(),
        source: domain_stats(ds.n_users_source, ds.n_items_source, ds.interactions_source.len()),
        target: domain_stats(ds.n_users_target, ds.n_items_target, ds.interactions_target.len()),
        overlapping_users: ds.n_overlap(),
        target_group_counts: ds.group_counts(),
    };
    write_json(&g.out.join(MANIFEST_FILE), &manifest)?;

    say!(g.quiet, "{:<8} {:>7} {:>7} {:>13} {:>9}", "domain", "users", "items", "interactions", "density");
    for (name, s) in [("source", &manifest.source), ("target", &manifest.target)] {
        say!(g.quiet, "{:<8} {:>7} {:>7} {:>13} {:>8.4}%", name, s.users, s.items, s.interactions, 100.0 * s.density);
    }
    say!(
        g.quiet,
        "overlapping users: {}; target groups g0/g1: {}/{}",
        manifest.overlapping_users,
        manifest.target_group_counts[0],
        manifest.target_group_counts[1]
    );
    Ok(())
}

fn print_report(quiet: bool, r: &EvaluationReport) {
    say!(quiet, "{:<10} {:>9} {:>9} {:>9} {:>9}", "metric", "overall", "g0", "g1", "UGF");
    for m in &r.metrics {
        say!(quiet, "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>9.4}", m.metric, m.overall, m.g0, m.g1, m.ugf);
    }
}

fn write_report(dir: &Path, r: &EvaluationReport) -> CliResult<()> {
    write_json(&dir.join("report.json"), r)?;
    write_text(&dir.join("report.csv"), &r.to_csv())
}

fn cmd_train(g: &GlobalArgs, data: &DataArgs, ablate: Option<Variant>, epochs: Option<usize>) -> CliResult<()> {
    let mut rc = run_config(g, data, None)?;
    if let Some(v) = ablate {
        v.apply(&mut rc.train);
    }
    if let Some(e) = epochs {
        rc.train.epochs = e;
    }
    let split = rc.load_split()?;
    let cfg = &rc.train;
    let outcome = if cfg.use_source {
        cdfa::trainer::train(&split, cfg)?
    } else {
        cdfa::trainer::train(&split.without_source(), cfg)?
    };
    let report = evaluate(&outcome.best.backbone, &split, Stage::Test, &rc.ks)?;

    create_out(&g.out)?;
    write_text(&g.out.join(CONFIG_FILE), &resolved_kv(&rc.kv, cfg).to_text())?;
    write_run_log(&g.out.join("run_log.jsonl"), &outcome.log)?;
    write_checkpoint(&g.out, &outcome, cfg)?;
    outcome.last.backbone.to_snapshot().write(&g.out.join("snapshot.cdfa"))?;
    write_json(&g.out.join(ID_MAP_FILE), &split.dataset.ids)?;
    write_report(&g.out, &report)?;

    say!(
        g.quiet,
        "trained {} epochs, best epoch {:?}, validation NDCG@10 {:.4}",
        outcome.log.len(),
        outcome.best_epoch.map(|e| e + 1),
        outcome.best_val_ndcg10
    );
    print_report(g.quiet, &report);
    Ok(())
}

fn load_run_kv(dir: &Path) -> CliResult<Option<KeyValues>> {
    let p = dir.join(CONFIG_FILE);
    if p.is_file() {
        Ok(Some(KeyValues::load(&p)?))
    } else {
        Ok(None)
    }
}

fn evaluate_checkpoint(dir: &Path, ds: &CrossDomainDataset, rc: &RunConfig) -> CliResult<EvaluationReport> {
    let (backbone, _) = read_checkpoint(dir, ds)?;
    let split = cdfa::dataset::split_per_user(ds, rc.seed);
    Ok(evaluate(&backbone, &split, Stage::Test, &rc.ks)?)
}

fn cmd_eval(g: &GlobalArgs, data: &DataArgs, checkpoint: &Path, baseline: Option<&Path>) -> CliResult<()> {
    let rc = run_config(g, data, load_run_kv(checkpoint)?)?;
    let ds = rc.load_dataset()?;
    let mut report = evaluate_checkpoint(checkpoint, &ds, &rc)?;
    if let Some(b) = baseline {
        let base = evaluate_checkpoint(b, &ds, &rc)?;
        report.compare_with(&base, &b.display().to_string())?;
    }
    create_out(&g.out)?;
    write_report(&g.out, &report)?;
    print_report(g.quiet, &report);
    if let Some(c) = &report.comparison {
        say!(
            g.quiet,
            "vs {}: accuracy {:+.2}%, UGF reduction {:+.2}%",
            c.baseline,
            c.mean_accuracy_change_pct,
            c.mean_ugf_reduction_pct
        );
    }
    Ok(())
}

fn cmd_ablate(g: &GlobalArgs, data: &DataArgs) -> CliResult<()> {
    let rc = run_config(g, data, None)?;
    let split = rc.load_split()?;
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for v in Variant::ABLATIONS {
        let run = run_variant(&split, &rc.train, v, &rc.ks)?;
        say!(
            g.quiet,
            "{:<13} Recall@10 {:.4}  UGF(Recall@10) {:.4}",
            v.label(),
            run.report.overall("Recall@10"),
            run.report.ugf("Recall@10")
        );
        rows.push((v.label().to_string(), run.report.clone()));
        summaries.push(run.summary());
    }
    create_out(&g.out)?;
    write_text(&g.out.join(CONFIG_FILE), &rc.kv.to_text())?;
    write_text(&g.out.join("ablation.csv"), &ablation_csv(&rows))?;
    write_json(&g.out.join("ablation.json"), &summaries)
}

fn cmd_sweep(g: &GlobalArgs, data: &DataArgs, axis: crate::SweepAxis, values: &[f64]) -> CliResult<()> {
    let rc = run_config(g, data, None)?;
    let mut cfgs = Vec::new();
    for &v in values {
        let mut cfg = rc.train.clone();
        set_axis(&mut cfg, axis, v)?;
        cfgs.push((v, cfg));
    }
    let split = rc.load_split()?;
    let mut rows = Vec::new();
    for (v, cfg) in cfgs {
        let outcome = if cfg.use_source {
            cdfa::trainer::train(&split, &cfg)?
        } else {
            cdfa::trainer::train(&split.without_source(), &cfg)?
        };
        let report = evaluate(&outcome.best.backbone, &split, Stage::Test, &rc.ks)?;
        say!(
            g.quiet,
            "{v:>8}  Recall@10 {:.4}  UGF(Recall@10) {:.4}",
            report.overall("Recall@10"),
            report.ugf("Recall@10")
        );
        rows.push((v, report));
    }
    create_out(&g.out)?;
    write_text(&g.out.join(CONFIG_FILE), &rc.kv.to_text())?;
    write_text(&g.out.join("sweep.csv"), &sweep_csv(&rows))
}

/// Lipschitz estimate of `z -> sigmoid(I z) / sqrt(n_items)` over the
/// target user cloud, i.e. the RMS-normalized item-probability map.
pub fn score_map_lipschitz(snap: &Snapshot, n_pairs: usize, seed: u64) -> CliResult<f64> {
    let items = snap.item_emb_target.mapv(f64::from);
    let users = snap.user_emb_target.mapv(f64::from);
    let norm = (items.nrows() as f64).sqrt();
    let f = |z: ndarray::ArrayView1<'_, f64>| -> Array1<f64> { items.dot(&z).mapv(|x| cdfa::gain::sigmoid(x) / norm) };
    Ok(lipschitz_estimate(f, users.view(), n_pairs, seed)?)
}

#[derive(Debug, Serialize)]
struct TheoryOutput {
    lf_source: &'static str,
    #[serde(flatten)]
    report: cdfa::theory::BoundReport,
}

fn cmd_theory(g: &GlobalArgs, a: &TheoryArgs) -> CliResult<()> {
    let kv = load_key_values(g.config.as_deref(), &g.sets)?;
    let seed = g.seed.or(kv.get("seed")?).unwrap_or(0);
    if !(a.lo > 0.0) {
        return Err(CliError::Usage(format!("--lo must be positive, got {}", a.lo)));
    }
    let lf_given = match a.lf.as_str() {
        "auto" => None,
        s => match s.parse::<f64>() {
            Ok(x) if x > 0.0 => Some(x),
            _ => return Err(CliError::Usage(format!("--lf expects `auto` or a positive number, got `{s}`"))),
        },
    };

    let snap = Snapshot::read(&a.snapshot)?;
    let id_path = a.snapshot.parent().unwrap_or(Path::new(".")).join(ID_MAP_FILE);
    let text = fs::read_to_string(&id_path).map_err(|e| io_err(&id_path, e))?;
    let ids: IdMaps = serde_json::from_str(&text).map_err(|e| cdfa::Error::Parse {
        path: id_path.clone(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let attrs = load_attributes(&a.attrs)?;
    let target_groups = ids
        .users_target
        .iter()
        .map(|u| {
            attrs
                .groups
                .get(u)
                .copied()
                .ok_or_else(|| CliError::from(cdfa::Error::Data(format!("target user `{u}` has no attribute"))))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let source_groups: Vec<_> = ids.users_source.iter().map(|u| attrs.groups.get(u).copied()).collect();
    let clouds = GroupClouds::from_snapshot(&snap, &target_groups, &source_groups)?;

    let (l_f, lf_source) = match lf_given {
        Some(x) => (x, "given"),
        None => (score_map_lipschitz(&snap, a.lipschitz_pairs, seed)?, "auto"),
    };
    let w1 = W1Config {
        subsample_n: a.subsample_n,
        repetitions: a.repetitions,
        seed,
    };
    let mut report = transfer_bound(&clouds, a.lo, l_f, &w1)?.with_baseline(a.baseline_ugf);
    report.measured_ugf = a.measured_ugf;

    create_out(&g.out)?;
    write_json(&g.out.join("bound.json"), &TheoryOutput { lf_source, report: report.clone() })?;
    say!(g.quiet, "W1 source groups   {:.6}", report.w1_source_groups);
    say!(g.quiet, "delta_t g0/g1      {:.6} / {:.6}", report.delta_t[0], report.delta_t[1]);
    say!(g.quiet, "delta_s g0/g1      {:.6} / {:.6}", report.delta_s[0], report.delta_s[1]);
    say!(g.quiet, "delta_ts           {:.6}", report.delta_ts);
    say!(g.quiet, "L_o {} L_f {:.6} ({lf_source})", report.l_o, report.l_f);
    say!(g.quiet, "bound rhs          {:.6}", report.rhs);
    say!(
        g.quiet,
        "preserved vs {:.6}: {} (margin {:.6})",
        a.baseline_ugf,
        report.preserved.unwrap_or(false),
        report.margin.unwrap_or(f64::NAN)
    );
    Ok(())
}
