//! Run configuration: a flat TOML file, `--set key=value` overrides and a few
//! dedicated flags, resolved into one [`RunConfig`] that every report echoes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sgm::clustering::FitConfig;
use sgm::gradcheck::GradcheckConfig;
use sgm::metrics::{DEFAULT_KNN_K, DEFAULT_KS};
use sgm::subspace::SubspaceConfig;
use sgm::trainer::{updates_for_epochs, LossKind, TrainConfig, PRESETS};
use sgm::Activation;

use crate::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SummarizeMode {
    /// One mixture over every sample.
    #[default]
    Global,
    /// One mixture per class, groups concatenated class by class.
    PerClass,
}

/// Every key the tool understands, fully resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    /// Seed of the stratified train/test split, shared by every command.
    pub split_seed: u64,
    /// Held-out fraction per class; 0 trains on everything.
    pub test_fraction: f64,
    pub standardize: bool,
    pub preset: Option<String>,

    pub loss: LossKind,
    pub per_class: usize,
    pub updates: usize,
    /// When set, replaces `updates` with the equivalent number of passes.
    pub epochs: Option<usize>,
    pub learning_rate: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub triplets_per_batch: usize,
    pub margin: f64,
    pub hidden: Vec<usize>,
    pub embedding_dim: usize,
    pub activation: Activation,
    pub priors: Option<Vec<f64>>,

    pub levels: usize,
    pub min_members: Option<usize>,
    pub warm_start: bool,

    pub cluster_max_iter: usize,
    pub cluster_tol: f64,
    pub cluster_restarts: usize,

    pub ks: Vec<usize>,
    pub knn_k: usize,

    pub summarize_mode: SummarizeMode,
    /// Mixture size in global mode; the class count when unset.
    pub groups: Option<usize>,
    pub groups_per_class: usize,
    pub top_k: usize,

    pub retrieve_k: usize,

    pub gradcheck_instances: usize,
    pub gradcheck_step: f64,
    pub gradcheck_tolerance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_train(TrainConfig::default())
    }
}

impl RunConfig {
    fn from_train(t: TrainConfig) -> Self {
        let fit = FitConfig::default();
        let check = GradcheckConfig::default();
        Self {
            seed: 0,
            split_seed: 0,
            test_fraction: 0.2,
            standardize: true,
            preset: t.preset,
            loss: t.loss,
            per_class: t.per_class,
            updates: t.updates,
            epochs: None,
            learning_rate: t.learning_rate,
            lambda: t.lambda,
            sigma: t.sigma,
            triplets_per_batch: t.triplets_per_batch,
            margin: t.margin,
            hidden: t.hidden,
            embedding_dim: t.embedding_dim,
            activation: t.activation,
            priors: t.priors,
            levels: SubspaceConfig::default().levels,
            min_members: None,
            warm_start: true,
            cluster_max_iter: fit.max_iter,
            cluster_tol: fit.tol,
            cluster_restarts: fit.restarts,
            ks: DEFAULT_KS.to_vec(),
            knn_k: DEFAULT_KNN_K,
            summarize_mode: SummarizeMode::Global,
            groups: None,
            groups_per_class: 5,
            top_k: 16,
            retrieve_k: 5,
            gradcheck_instances: check.instances,
            gradcheck_step: check.step,
            gradcheck_tolerance: check.tolerance,
        }
    }

    /// Trainer settings for a training set of `len` rows over `classes` classes.
    pub fn train_config(&self, len: usize, classes: usize) -> TrainConfig {
        let updates = match self.epochs {
            Some(e) => updates_for_epochs(e, len, self.per_class, classes),
            None => self.updates,
        };
        TrainConfig {
            per_class: self.per_class,
            updates,
            learning_rate: self.learning_rate,
            lambda: self.lambda,
            sigma: self.sigma,
            seed: self.seed,
            loss: self.loss,
            triplets_per_batch: self.triplets_per_batch,
            margin: self.margin,
            hidden: self.hidden.clone(),
            embedding_dim: self.embedding_dim,
            activation: self.activation,
            priors: self.priors.clone(),
            preset: self.preset.clone(),
        }
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            max_iter: self.cluster_max_iter,
            tol: self.cluster_tol,
            restarts: self.cluster_restarts,
        }
    }

    pub fn subspace_config(&self, len: usize, classes: usize) -> SubspaceConfig {
        SubspaceConfig {
            levels: self.levels,
            min_members: self.min_members,
            train: self.train_config(len, classes),
            warm_start: self.warm_start,
            em: self.fit_config(),
        }
    }

    pub fn gradcheck_config(&self) -> GradcheckConfig {
        GradcheckConfig {
            instances: self.gradcheck_instances,
            step: self.gradcheck_step,
            tolerance: self.gradcheck_tolerance,
            sigma: self.sigma,
            lambda: self.lambda,
            margin: self.margin,
            corrupt: false,
        }
    }
}

/// The file schema: every key optional, anything else rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    seed: Option<u64>,
    split_seed: Option<u64>,
    test_fraction: Option<f64>,
    standardize: Option<bool>,
    preset: Option<String>,
    loss: Option<LossKind>,
    per_class: Option<usize>,
    updates: Option<usize>,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    lambda: Option<f64>,
    sigma: Option<f64>,
    triplets_per_batch: Option<usize>,
    margin: Option<f64>,
    hidden: Option<Vec<usize>>,
    embedding_dim: Option<usize>,
    activation: Option<Activation>,
    priors: Option<Vec<f64>>,
    levels: Option<usize>,
    min_members: Option<usize>,
    warm_start: Option<bool>,
    cluster_max_iter: Option<usize>,
    cluster_tol: Option<f64>,
    cluster_restarts: Option<usize>,
    ks: Option<Vec<usize>>,
    knn_k: Option<usize>,
    summarize_mode: Option<SummarizeMode>,
    groups: Option<usize>,
    groups_per_class: Option<usize>,
    top_k: Option<usize>,
    retrieve_k: Option<usize>,
    gradcheck_instances: Option<usize>,
    gradcheck_step: Option<f64>,
    gradcheck_tolerance: Option<f64>,
}

macro_rules! overlay {
    ($file:ident => $cfg:ident; $($key:ident),* ; optional $($opt:ident),*) => {
        $(if let Some(v) = $file.$key { $cfg.$key = v; })*
        $(if let Some(v) = $file.$opt { $cfg.$opt = Some(v); })*
    };
}

/// Command-line values that sit above the file and `--set`.
#[derive(Debug, Default, Clone)]
pub struct FlagOverrides {
    pub seed: Option<u64>,
    pub preset: Option<String>,
    pub loss: Option<LossKind>,
    pub summarize_mode: Option<SummarizeMode>,
}

/// Reads `path` (if any), applies `sets` in order, then `flags`.
///
/// A preset, wherever it is named, provides the starting values; every
/// explicit key then overrides it.
pub fn resolve(path: Option<&Path>, sets: &[String], flags: &FlagOverrides) -> Result<RunConfig, CliError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            text.parse::<toml::Table>()
                .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for set in sets {
        let (key, value) = set
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got {set:?}")))?;
        table.insert(key.trim().to_string(), parse_value(value.trim()));
    }
    if let Some(p) = &flags.preset {
        table.insert("preset".into(), toml::Value::String(p.clone()));
    }
    let file: ConfigFile = table
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Usage(format!("config: {}", e.message())))?;

    let base = match &file.preset {
        Some(name) => TrainConfig::preset(name).ok_or_else(|| {
            CliError::Usage(format!("unknown preset {name:?} (expected one of {})", PRESETS.join(", ")))
        })?,
        None => TrainConfig::default(),
    };
    let mut cfg = RunConfig::from_train(base);
    overlay!(file => cfg;
        seed, split_seed, test_fraction, standardize, loss, per_class, updates,
        learning_rate, lambda, sigma, triplets_per_batch, margin, hidden, embedding_dim,
        activation, levels, warm_start, cluster_max_iter, cluster_tol, cluster_restarts,
        ks, knn_k, summarize_mode, groups_per_class, top_k, retrieve_k,
        gradcheck_instances, gradcheck_step, gradcheck_tolerance;
        optional preset, epochs, priors, min_members, groups);
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    if let Some(loss) = flags.loss {
        cfg.loss = loss;
    }
    if let Some(mode) = flags.summarize_mode {
        cfg.summarize_mode = mode;
    }
    if !(0.0..1.0).contains(&cfg.test_fraction) {
        return Err(CliError::Usage(format!(
            "test_fraction must lie in [0, 1), got {}",
            cfg.test_fraction
        )));
    }
    Ok(cfg)
}

/// TOML literal when it parses as one, bare string otherwise.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), text).unwrap();
        f
    }

    #[test]
    fn defaults_without_file() {
        let cfg = resolve(None, &[], &FlagOverrides::default()).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.per_class, 30);
        assert_eq!(cfg.ks, vec![1, 2, 4, 8, 16, 32]);
    }

    #[test]
    fn file_then_set_then_flags() {
        let f = write("seed = 3\nupdates = 50\nhidden = [8, 4]\nloss = \"triplet\"\n");
        let sets = ["updates=70".to_string(), "activation=tanh".to_string()];
        let flags = FlagOverrides {
            seed: Some(9),
            ..FlagOverrides::default()
        };
        let cfg = resolve(Some(f.path()), &sets, &flags).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.updates, 70);
        assert_eq!(cfg.hidden, vec![8, 4]);
        assert_eq!(cfg.loss, LossKind::Triplet);
        assert_eq!(cfg.activation, Activation::Tanh);
    }

    #[test]
    fn preset_is_a_base_not_an_override() {
        let f = write("preset = \"paper-exp\"\n");
        assert_eq!(resolve(Some(f.path()), &[], &FlagOverrides::default()).unwrap().per_class, 32);
        let f = write("preset = \"paper-exp\"\nper_class = 5\n");
        assert_eq!(resolve(Some(f.path()), &[], &FlagOverrides::default()).unwrap().per_class, 5);
        let flags = FlagOverrides {
            preset: Some("paper-meth".into()),
            ..FlagOverrides::default()
        };
        let cfg = resolve(None, &[], &flags).unwrap();
        assert_eq!((cfg.per_class, cfg.preset.as_deref()), (30, Some("paper-meth")));
    }

    #[test]
    fn unknown_keys_are_fatal() {
        let f = write("sedd = 1\n");
        let err = resolve(Some(f.path()), &[], &FlagOverrides::default()).unwrap_err();
        assert!(matches!(&err, CliError::Usage(m) if m.contains("sedd")), "{err:?}");
        let err = resolve(None, &["colour=1".into()], &FlagOverrides::default()).unwrap_err();
        assert!(matches!(err, CliError::Usage(_)));
    }

    #[test]
    fn bad_values_are_usage_errors() {
        for set in ["loss=hinge", "preset=huge", "updates=-3", "test_fraction=1.0", "noequals"] {
            let err = resolve(None, &[set.to_string()], &FlagOverrides::default()).unwrap_err();
            assert!(matches!(err, CliError::Usage(_)), "{set}: {err:?}");
        }
    }

    #[test]
    fn epochs_convert_to_updates() {
        let cfg = resolve(None, &["epochs=3".into(), "per_class=10".into()], &FlagOverrides::default()).unwrap();
        assert_eq!(cfg.train_config(400, 4).updates, 30);
        assert_eq!(cfg.train_config(401, 4).updates, 31);
    }
}
