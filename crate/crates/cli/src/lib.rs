//! Command-line front end: dataset generation, training, evaluation,
//! ablations, single-axis sweeps and bound reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "cdfa", version, about = "Fairness-aware cross-domain recommendation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Root seed for every randomized component.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    #[arg(long, global = true)]
    pub quiet: bool,

    /// Configuration override `key=value`; repeatable, beats the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Directory written by `synth`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub attrs: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic two-domain dataset.
    Synth,
    /// Train one model and evaluate it on the target test split.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Component preset; overrides the individual flags.
        #[arg(long, value_enum)]
        ablate: Option<Variant>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate a training checkpoint on the target test split.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        /// Run directory holding the checkpoint.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Second run directory to compare against.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Full model and its four single-component ablations.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
    },
    /// One run per value of a single hyperparameter.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Wasserstein bound report for an embedding snapshot.
    Theory(TheoryArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TheoryArgs {
    #[arg(long)]
    pub snapshot: PathBuf,
    #[arg(long)]
    pub attrs: PathBuf,
    /// Group gap of the reference run without transfer.
    #[arg(long)]
    pub baseline_ugf: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lo: f64,
    /// `auto` or a positive number.
    #[arg(long, default_value = "auto")]
    pub lf: String,
    #[arg(long)]
    pub measured_ugf: Option<f64>,
    #[arg(long, default_value_t = 256)]
    pub subsample_n: usize,
    #[arg(long, default_value_t = 8)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 20_000)]
    pub lipschitz_pairs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepAxis {
    CandidateSize,
    Epsilon,
    Gamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum)]
pub enum Variant {
    /// Every component on.
    Full,
    NoAlpha,
    NoFs,
    NoRedist,
    NoEst,
    /// Every component off: plain joint training.
    None,
    /// Every component off and no source positives.
    TargetOnly,
}

impl Variant {
    pub const ABLATIONS: [Variant; 5] = [Variant::Full, Variant::NoAlpha, Variant::NoFs, Variant::NoRedist, Variant::NoEst];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "CDFA",
            Variant::NoAlpha => "w/o alpha",
            Variant::NoFs => "w/o FS",
            Variant::NoRedist => "w/o L_redist",
            Variant::NoEst => "w/o L_est",
            Variant::None => "CDR",
            Variant::TargetOnly => "target-only",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoAlpha => "no-alpha",
            Variant::NoFs => "no-fs",
            Variant::NoRedist => "no-redist",
            Variant::NoEst => "no-est",
            Variant::None => "none",
            Variant::TargetOnly => "target-only",
        }
    }

    pub fn apply(self, cfg: &mut cdfa::trainer::TrainConfig) {
        use cdfa::trainer::AblationFlags;
        let mut flags = AblationFlags::FULL;
        match self {
            Variant::Full => {}
            Variant::NoAlpha => flags.use_alpha = false,
            Variant::NoFs => flags.use_fair_sampling = false,
            Variant::NoRedist => flags.use_redistribution = false,
            Variant::NoEst => flags.use_estimator_loss = false,
            Variant::None | Variant::TargetOnly => flags = AblationFlags::NONE,
        }
        cfg.flags = flags;
        cfg.use_source = self != Variant::TargetOnly;
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    commands::dispatch(cli)
}
