//! Subcommand bodies and the plumbing they share: dataset loading, the
//! train/test partition, standardization and checkpoint handling.

pub mod compare;
pub mod embed;
pub mod eval;
pub mod gradcheck;
pub mod retrieve;
pub mod subspace;
pub mod summarize;
pub mod synth;
pub mod train;

use std::path::Path;

use ndarray::Array2;
use serde::Serialize;
use sgm::data::split;
use sgm::numerics::RNG_ALGORITHM;
use sgm::trainer::init_encoder;
use sgm::{Checkpoint, Dataset, EncoderParams, RngStream, Standardizer};

use crate::config::RunConfig;
use crate::{CliError, Common};

/// Substream ids under the run seed. Training uses the seed's main stream.
pub const EVAL_STREAM: u64 = 1;
pub const FRESH_INIT_STREAM: u64 = 2;
pub const SUMMARIZE_STREAM: u64 = 3;

/// Header shared by every report.
#[derive(Debug, Serialize)]
pub struct RunInfo<'a> {
    pub command: &'a str,
    pub version: &'static str,
    pub dataset: Option<String>,
    pub checkpoint: Option<String>,
    pub rng_algorithm: &'static str,
    pub config: &'a RunConfig,
}

impl<'a> RunInfo<'a> {
    pub fn new(command: &'a str, common: &Common, config: &'a RunConfig) -> Self {
        Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            dataset: common.dataset.as_ref().map(|p| p.display().to_string()),
            checkpoint: common.checkpoint.as_ref().map(|p| p.display().to_string()),
            rng_algorithm: RNG_ALGORITHM,
            config,
        }
    }
}

pub fn dataset_path(common: &Common) -> Result<&Path, CliError> {
    common
        .dataset
        .as_deref()
        .ok_or_else(|| CliError::Usage("--dataset is required".into()))
}

pub fn checkpoint_path(common: &Common) -> Result<&Path, CliError> {
    common
        .checkpoint
        .as_deref()
        .ok_or_else(|| CliError::Usage("--checkpoint is required".into()))
}

pub fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    Ok(Dataset::load_csv(path)?)
}

/// Rows used for training and the held-out rows, as indices into the file.
pub struct Partition {
    pub train: Dataset,
    pub test: Option<Dataset>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Stratified split under `split_seed`, or everything for training when
/// `test_fraction` is 0.
pub fn partition(data: &Dataset, cfg: &RunConfig) -> Result<Partition, CliError> {
    if cfg.test_fraction == 0.0 {
        return Ok(Partition {
            train: data.clone(),
            test: None,
            train_indices: (0..data.len()).collect(),
            test_indices: Vec::new(),
        });
    }
    let parts = split(
        data,
        (1.0 - cfg.test_fraction, cfg.test_fraction),
        &mut RngStream::new(cfg.split_seed),
    )?;
    Ok(Partition {
        train: parts.train,
        test: Some(parts.test),
        train_indices: parts.train_indices,
        test_indices: parts.test_indices,
    })
}

/// An encoder together with the input standardization it was trained under.
pub struct Model {
    pub params: EncoderParams,
    pub standardizer: Option<Standardizer>,
    pub id: String,
}

impl Model {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let ckpt = Checkpoint::load(path)?;
        Ok(Self {
            params: ckpt.encoder()?,
            id: ckpt.id(),
            standardizer: ckpt.standardizer,
        })
    }

    /// Untrained encoder drawn from the run seed, standardizing with
    /// statistics of `fit_on`.
    pub fn fresh(fit_on: &Dataset, cfg: &RunConfig) -> Result<Self, CliError> {
        let train_cfg = cfg.train_config(fit_on.len(), fit_on.num_classes());
        let params = init_encoder(
            fit_on.dim(),
            &train_cfg,
            &mut RngStream::substream(cfg.seed, FRESH_INIT_STREAM),
        )?;
        Ok(Self {
            params,
            standardizer: fit_standardizer(cfg, fit_on),
            id: "fresh-init".into(),
        })
    }

    pub fn from_trained(params: EncoderParams, standardizer: Option<Standardizer>) -> Self {
        let ckpt = Checkpoint::new(&params, standardizer);
        Self {
            id: ckpt.id(),
            params,
            standardizer: ckpt.standardizer,
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(&self.params, self.standardizer.clone())
    }

    pub fn embed(&self, data: &Dataset) -> Result<Array2<f64>, CliError> {
        let expected = self.params.spec().input_dim;
        if data.dim() != expected {
            return Err(CliError::Data(format!(
                "checkpoint expects {expected} input features but the dataset has {}",
                data.dim()
            )));
        }
        let x = standardized(self.standardizer.as_ref(), data)?;
        Ok(self.params.embed(x.features())?)
    }
}

pub fn fit_standardizer(cfg: &RunConfig, train: &Dataset) -> Option<Standardizer> {
    cfg.standardize.then(|| Standardizer::fit(train.features()))
}

pub fn standardized(standardizer: Option<&Standardizer>, data: &Dataset) -> Result<Dataset, CliError> {
    Ok(match standardizer {
        Some(s) => data.with_features(s.apply(data.features())?)?,
        None => data.clone(),
    })
}

pub fn checkpoint_bytes(ckpt: &Checkpoint) -> Vec<u8> {
    ckpt.to_json().into_bytes()
}
