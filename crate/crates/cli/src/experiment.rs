//! Variant runs and the tables built from them.

use serde::Serialize;

use cdfa::dataset::SplitDataset;
use cdfa::metrics::{evaluate, EvaluationReport, Stage};
use cdfa::trainer::{train, Counters, TrainConfig, TrainOutcome};

use crate::error::{CliError, CliResult};
use crate::{SweepAxis, Variant};

pub const TABLE_METRICS: [&str; 4] = ["Recall@10", "Recall@20", "NDCG@10", "NDCG@20"];

#[derive(Debug, Clone)]
pub struct VariantRun {
    pub variant: Variant,
    pub report: EvaluationReport,
    pub outcome: TrainOutcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct VariantSummary {
    pub variant: String,
    pub best_epoch: Option<usize>,
    pub counters: Counters,
    pub report: EvaluationReport,
}

impl VariantRun {
    pub fn summary(&self) -> VariantSummary {
        VariantSummary {
            variant: self.variant.label().to_string(),
            best_epoch: self.outcome.best_epoch,
            counters: self.outcome.best.counters,
            report: self.report.clone(),
        }
    }
}

/// Trains `variant` on top of `base` and evaluates the best state on the
/// target test split.
pub fn run_variant(data: &SplitDataset, base: &TrainConfig, variant: Variant, ks: &[usize]) -> CliResult<VariantRun> {
    let mut cfg = base.clone();
    variant.apply(&mut cfg);
    let outcome = if cfg.use_source {
        train(data, &cfg)?
    } else {
        train(&data.without_source(), &cfg)?
    };
    let report = evaluate(&outcome.best.backbone, data, Stage::Test, ks)?;
    Ok(VariantRun { variant, report, outcome })
}

fn table_value(r: &EvaluationReport, metric: &str, ugf: bool) -> String {
    match r.get(metric) {
        Some(m) if ugf => format!("{:.6}", m.ugf),
        Some(m) => format!("{:.6}", m.overall),
        None => "NaN".into(),
    }
}

/// One row per report: four accuracy columns then four UGF columns.
pub fn ablation_csv(rows: &[(String, EvaluationReport)]) -> String {
    let mut out = String::from("variant");
    for m in TABLE_METRICS {
        out.push_str(&format!(",{m}"));
    }
    for m in TABLE_METRICS {
        out.push_str(&format!(",UGF({m})"));
    }
    out.push('\n');
    for (name, r) in rows {
        out.push_str(name);
        for m in TABLE_METRICS {
            out.push(',');
            out.push_str(&table_value(r, m, false));
        }
        for m in TABLE_METRICS {
            out.push(',');
            out.push_str(&table_value(r, m, true));
        }
        out.push('\n');
    }
    out
}

pub fn sweep_csv(rows: &[(f64, EvaluationReport)]) -> String {
    let mut out = String::from("value,Recall@10,NDCG@10,UGF(Recall@10),UGF(NDCG@10)\n");
    for (v, r) in rows {
        out.push_str(&format!(
            "{v},{},{},{},{}\n",
            table_value(r, "Recall@10", false),
            table_value(r, "NDCG@10", false),
            table_value(r, "Recall@10", true),
            table_value(r, "NDCG@10", true)
        ));
    }
    out
}

pub fn set_axis(cfg: &mut TrainConfig, axis: SweepAxis, value: f64) -> CliResult<()> {
    match axis {
        SweepAxis::CandidateSize => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(CliError::Usage(format!("candidate_size must be a positive integer, got {value}")));
            }
            cfg.sampler.candidate_size = value as usize;
        }
        SweepAxis::Epsilon => cfg.sampler.epsilon = value,
        SweepAxis::Gamma => cfg.gamma = value,
    }
    cfg.validate()?;
    Ok(())
}
