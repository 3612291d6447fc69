//! Training loops: class-balanced batches, per-batch class means, the SGM
//! loss (or the triplet baseline), backprop through the encoder and Adam.

use std::time::Instant;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::encoder::{Activation, EncoderParams, EncoderSpec};
use crate::error::{Error, Result};
use crate::gaussian_manifold::SgmLoss;
use crate::numerics::{adam_step, AdamState, RngStream, RNG_ALGORITHM};
use crate::triplet::{sample_triplets, triplet_loss};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Sgm,
    Triplet,
}

impl std::str::FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sgm" => Ok(LossKind::Sgm),
            "triplet" => Ok(LossKind::Triplet),
            other => Err(format!("unknown loss {other:?} (expected sgm or triplet)")),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Sgm => "sgm",
            LossKind::Triplet => "triplet",
        })
    }
}

/// Named starting points for [`TrainConfig`].
pub const PRESETS: [&str; 2] = ["paper-meth", "paper-exp"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Samples per class in every batch (`n`); batches hold `n * c` rows.
    pub per_class: usize,
    /// Optimizer updates (`N`).
    pub updates: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub seed: u64,
    pub loss: LossKind,
    pub triplets_per_batch: usize,
    pub margin: f64,
    pub hidden: Vec<usize>,
    pub embedding_dim: usize,
    pub activation: Activation,
    /// Class priors for the SGM posterior; `None` means uniform.
    pub priors: Option<Vec<f64>>,
    pub preset: Option<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            per_class: 30,
            updates: 1000,
            learning_rate: 1e-4,
            lambda: 0.01,
            sigma: 0.5,
            seed: 0,
            loss: LossKind::Sgm,
            triplets_per_batch: 128,
            margin: 0.2,
            hidden: vec![64],
            embedding_dim: 64,
            activation: Activation::Relu,
            priors: None,
            preset: None,
        }
    }
}

impl TrainConfig {
    /// `paper-meth`: 30 per class (240 rows for 8 classes).
    /// `paper-exp`: 32 per class (256 rows for 8 classes).
    pub fn preset(name: &str) -> Option<Self> {
        let per_class = match name {
            "paper-meth" => 30,
            "paper-exp" => 32,
            _ => return None,
        };
        Some(Self {
            per_class,
            preset: Some(name.to_string()),
            ..Self::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.per_class == 0 {
            return Err(Error::contract("per_class must be at least 1"));
        }
        if self.updates == 0 {
            return Err(Error::contract("updates must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::contract(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::contract(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::contract(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if !(self.margin >= 0.0) {
            return Err(Error::contract(format!("margin must be nonnegative, got {}", self.margin)));
        }
        if self.loss == LossKind::Triplet && self.triplets_per_batch == 0 {
            return Err(Error::contract("triplets_per_batch must be at least 1"));
        }
        Ok(())
    }

    pub fn encoder_spec(&self, input_dim: usize) -> EncoderSpec {
        EncoderSpec::new(input_dim, self.hidden.clone(), self.embedding_dim, self.activation)
    }

    pub fn sgm_loss(&self) -> SgmLoss {
        SgmLoss {
            sigma: self.sigma,
            lambda: self.lambda,
            priors: self.priors.clone(),
        }
    }
}

/// Updates covering `epochs` passes over `dataset_len` samples with
/// batches of `per_class * num_classes` rows, rounded up.
pub fn updates_for_epochs(epochs: usize, dataset_len: usize, per_class: usize, num_classes: usize) -> usize {
    let batch = (per_class * num_classes).max(1);
    (epochs * dataset_len).div_ceil(batch).max(1)
}

/// Wall-clock data, kept apart from the reproducible part of a report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss: LossKind,
    /// Loss of the batch seen at every update, before the step.
    pub loss_trace: Vec<f64>,
    pub config: TrainConfig,
    pub seed: u64,
    pub stream_id: u64,
    pub rng_algorithm: String,
    pub warm_start: bool,
    pub timing: Timing,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        *self.loss_trace.last().expect("at least one update")
    }
}

/// `n` rows per class, class by class: uniform without replacement when the
/// class has at least `n` members, with replacement otherwise. Always `n`
/// draws per class.
pub fn sample_class_balanced_batch(
    dataset: &Dataset,
    n: usize,
    rng: &mut RngStream,
) -> Result<(Array2<f64>, Vec<usize>)> {
    let (indices, labels) = sample_batch_indices(dataset, n, rng)?;
    Ok((dataset.features().select(Axis(0), &indices), labels))
}

fn sample_batch_indices(dataset: &Dataset, n: usize, rng: &mut RngStream) -> Result<(Vec<usize>, Vec<usize>)> {
    if n == 0 {
        return Err(Error::contract("per-class batch size must be at least 1"));
    }
    let members = dataset.class_members();
    if let Some(class) = members.iter().position(Vec::is_empty) {
        return Err(Error::MissingClass { class });
    }
    let c = members.len();
    let mut indices = Vec::with_capacity(n * c);
    let mut labels = Vec::with_capacity(n * c);
    for (class, pool) in members.into_iter().enumerate() {
        if pool.len() >= n {
            let mut pool = pool;
            for i in 0..n {
                let j = i + rng.index(pool.len() - i);
                pool.swap(i, j);
                indices.push(pool[i]);
            }
        } else {
            for _ in 0..n {
                indices.push(pool[rng.index(pool.len())]);
            }
        }
        labels.extend(std::iter::repeat_n(class, n));
    }
    Ok((indices, labels))
}

/// Fresh encoder for `input_dim` inputs under `config`.
pub fn init_encoder(input_dim: usize, config: &TrainConfig, rng: &mut RngStream) -> Result<EncoderParams> {
    EncoderParams::init(config.encoder_spec(input_dim), rng)
}

/// Initializes an encoder from `rng`, then runs `config.updates` SGM updates.
pub fn train_sgm(dataset: &Dataset, config: &TrainConfig, rng: &mut RngStream) -> Result<(EncoderParams, TrainReport)> {
    let config = TrainConfig {
        loss: LossKind::Sgm,
        ..config.clone()
    };
    config.validate()?;
    let params = init_encoder(dataset.dim(), &config, rng)?;
    run(params, dataset, &config, rng, false)
}

/// Initializes an encoder from `rng`, then runs `config.updates` triplet updates.
pub fn train_triplet(
    dataset: &Dataset,
    config: &TrainConfig,
    rng: &mut RngStream,
) -> Result<(EncoderParams, TrainReport)> {
    let config = TrainConfig {
        loss: LossKind::Triplet,
        ..config.clone()
    };
    config.validate()?;
    let params = init_encoder(dataset.dim(), &config, rng)?;
    run(params, dataset, &config, rng, false)
}

/// Dispatches on `config.loss` with a fresh encoder.
pub fn train(dataset: &Dataset, config: &TrainConfig, rng: &mut RngStream) -> Result<(EncoderParams, TrainReport)> {
    match config.loss {
        LossKind::Sgm => train_sgm(dataset, config, rng),
        LossKind::Triplet => train_triplet(dataset, config, rng),
    }
}

/// Continues training `params` with the loss named in `config`. Adam state
/// starts fresh.
pub fn train_from(
    params: EncoderParams,
    dataset: &Dataset,
    config: &TrainConfig,
    rng: &mut RngStream,
) -> Result<(EncoderParams, TrainReport)> {
    config.validate()?;
    if params.spec().input_dim != dataset.dim() {
        return Err(Error::Dimension(format!(
            "encoder expects {} inputs but the dataset has {} features",
            params.spec().input_dim,
            dataset.dim()
        )));
    }
    run(params, dataset, config, rng, true)
}

fn run(
    mut params: EncoderParams,
    dataset: &Dataset,
    config: &TrainConfig,
    rng: &mut RngStream,
    warm_start: bool,
) -> Result<(EncoderParams, TrainReport)> {
    let start = Instant::now();
    let sgm = config.sgm_loss();
    let mut adam = AdamState::new(params.len());
    let mut trace = Vec::with_capacity(config.updates);
    for update in 0..config.updates {
        let loss = step(&mut params, dataset, config, &sgm, &mut adam, rng).map_err(|e| e.at_update(update))?;
        trace.push(loss);
        if update % 100 == 0 {
            log::debug!("update {update}: {} loss {loss:.6}", config.loss);
        }
    }
    let report = TrainReport {
        loss: config.loss,
        loss_trace: trace,
        config: config.clone(),
        seed: rng.seed(),
        stream_id: rng.stream_id(),
        rng_algorithm: RNG_ALGORITHM.to_string(),
        warm_start,
        timing: Timing {
            seconds: start.elapsed().as_secs_f64(),
        },
    };
    Ok((params, report))
}

fn step(
    params: &mut EncoderParams,
    dataset: &Dataset,
    config: &TrainConfig,
    sgm: &SgmLoss,
    adam: &mut AdamState,
    rng: &mut RngStream,
) -> Result<f64> {
    let (x, labels) = sample_class_balanced_batch(dataset, config.per_class, rng)?;
    let (z, cache) = params.forward(x.view())?;
    let (loss, dl_dz) = match config.loss {
        LossKind::Sgm => {
            let out = sgm.evaluate(z.view(), &labels, dataset.num_classes())?;
            (out.loss, out.grad)
        }
        LossKind::Triplet => {
            let triplets = sample_triplets(&labels, config.triplets_per_batch, rng)?;
            triplet_loss(z.view(), &triplets, config.margin)?
        }
    };
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("loss became {loss}")));
    }
    let grads = params.backward(&cache, dl_dz.view())?;
    adam_step(params.as_mut_slice(), grads.as_slice(), adam, config.learning_rate)?;
    Ok(loss)
}
