//! Run configuration: config file, then `--set` entries, then dedicated
//! flags, later sources winning.

use std::path::{Path, PathBuf};

use cdfa::dataset::{split_per_user, CrossDomainDataset, SplitDataset, SynthConfig};
use cdfa::kv::KeyValues;
use cdfa::trainer::TrainConfig;

use crate::error::{CliError, CliResult};

pub const SOURCE_FILE: &str = "source.tsv";
pub const TARGET_FILE: &str = "target.tsv";
pub const ATTRIBUTES_FILE: &str = "attributes.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.txt";

const SYNTH_KEYS: &[&str] = &[
    "n_users_source",
    "n_users_target",
    "overlap_fraction",
    "n_items",
    "n_items_source",
    "n_items_target",
    "latent_dim",
    "group_split",
    "source_disparity",
    "domain_shift",
    "interactions_per_user",
    "source_interactions_per_user",
    "base_noise",
    "rng_seed",
];

const TRAIN_KEYS: &[&str] = &[
    "learning_rate",
    "lr",
    "batch_size",
    "l2_reg",
    "epochs",
    "gamma",
    "epsilon",
    "candidate_size",
    "negatives_per_positive",
    "use_alpha",
    "use_fair_sampling",
    "use_redistribution",
    "use_estimator_loss",
    "patience",
    "dim",
    "mode",
    "estimator_lr",
    "dropout",
    "estimator_hidden",
    "use_source",
    "audit_partition",
];

const RUN_KEYS: &[&str] = &["seed", "ks"];

pub fn is_known_key(key: &str) -> bool {
    SYNTH_KEYS.contains(&key) || TRAIN_KEYS.contains(&key) || RUN_KEYS.contains(&key)
}

/// Merges the config file (if any) with `key=value` overrides and rejects
/// unknown keys.
pub fn load_key_values(config: Option<&Path>, sets: &[String]) -> CliResult<KeyValues> {
    let mut kv = match config {
        Some(p) => KeyValues::load(p)?,
        None => KeyValues::default(),
    };
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got `{s}`")))?;
        kv.set(k.trim(), v.trim());
    }
    if let Some(bad) = kv.keys().find(|k| !is_known_key(k)) {
        return Err(CliError::Usage(format!("unknown configuration key `{bad}`")));
    }
    Ok(kv)
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Files {
        source: PathBuf,
        target: PathBuf,
        attributes: PathBuf,
    },
    Synthetic(SynthConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSource,
    pub train: TrainConfig,
    pub ks: Vec<usize>,
    /// Effective key-values, written next to run outputs.
    pub kv: KeyValues,
}

#[derive(Debug, Clone, Default)]
pub struct DataPaths {
    pub data_dir: Option<PathBuf>,
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub attrs: Option<PathBuf>,
}

impl DataPaths {
    fn resolve(&self) -> CliResult<Option<(PathBuf, PathBuf, PathBuf)>> {
        let explicit = [&self.source, &self.target, &self.attrs];
        let n_explicit = explicit.iter().filter(|p| p.is_some()).count();
        match (&self.data_dir, n_explicit) {
            (Some(_), n) if n > 0 => Err(CliError::Usage("--data cannot be combined with --source/--target/--attrs".into())),
            (Some(d), _) => Ok(Some((d.join(SOURCE_FILE), d.join(TARGET_FILE), d.join(ATTRIBUTES_FILE)))),
            (None, 0) => Ok(None),
            (None, 3) => Ok(Some((
                self.source.clone().unwrap(),
                self.target.clone().unwrap(),
                self.attrs.clone().unwrap(),
            ))),
            (None, _) => Err(CliError::Usage("--source, --target and --attrs must be given together".into())),
        }
    }
}

impl RunConfig {
    /// `seed` applies to every component unless `rng_seed` pins the
    /// generator separately.
    pub fn from_key_values(kv: KeyValues, paths: &DataPaths, seed_flag: Option<u64>) -> CliResult<Self> {
        let mut kv = kv;
        if let Some(s) = seed_flag {
            kv.set("seed", s);
        }
        let seed: u64 = kv.get("seed")?.unwrap_or(0);

        let mut train = TrainConfig::default();
        train.apply_kv(&kv)?;
        train.seed = seed;
        train.validate()?;

        let data = match paths.resolve()? {
            Some((source, target, attributes)) => {
                if let Some(k) = kv.keys().find(|k| SYNTH_KEYS.contains(k)) {
                    return Err(CliError::Usage(format!("`{k}` configures synthetic data but data files were given")));
                }
                for p in [&source, &target, &attributes] {
                    if !p.is_file() {
                        return Err(cdfa::Error::io(p, std::io::Error::from(std::io::ErrorKind::NotFound)).into());
                    }
                }
                DataSource::Files { source, target, attributes }
            }
            None => {
                let mut synth = SynthConfig {
                    rng_seed: seed,
                    ..SynthConfig::default()
                };
                synth.apply_kv(&kv)?;
                synth.validate()?;
                DataSource::Synthetic(synth)
            }
        };
        let ks = kv.get_list::<usize>("ks")?.unwrap_or_else(|| cdfa::metrics::DEFAULT_KS.to_vec());
        if ks.is_empty() || ks.contains(&0) {
            return Err(CliError::Usage("ks must be a non-empty list of positive cutoffs".into()));
        }
        Ok(Self { seed, data, train, ks, kv })
    }

    pub fn load_dataset(&self) -> CliResult<CrossDomainDataset> {
        Ok(match &self.data {
            DataSource::Files { source, target, attributes } => CrossDomainDataset::from_files(source, target, attributes)?,
            DataSource::Synthetic(cfg) => cdfa::dataset::generate_synthetic(cfg)?,
        })
    }

    pub fn load_split(&self) -> CliResult<SplitDataset> {
        Ok(split_per_user(&self.load_dataset()?, self.seed))
    }
}
