//! Finite-difference checks of every analytic gradient in the crate.
//!
//! Each suite draws random small instances, evaluates the analytic gradient
//! and compares it with a fourth-order central difference, entry by entry:
//! `|a - n| / max(|a|, |n|, 1e-8)`. Instances too close to a
//! non-differentiable point (triplet hinge, ReLU kink) are redrawn.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::encoder::{Activation, EncoderParams, EncoderSpec, ForwardCache};
use crate::error::{Error, Result};
use crate::gaussian_manifold::SgmLoss;
use crate::numerics::RngStream;
use crate::triplet::{sample_triplets, triplet_loss, Triplet};

const DENOMINATOR_FLOOR: f64 = 1e-8;
const HINGE_MARGIN: f64 = 1e-3;
const KINK_MARGIN: f64 = 1e-3;
const MAX_REDRAWS: usize = 1000;
const STRUCTURAL_ZERO_TOL: f64 = 1e-12;

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(DENOMINATOR_FLOOR)
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// Fourth-order central difference of `f` at `x` along every coordinate.
pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> Result<f64>, x: &[f64], step: f64) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let mut at = |offset: f64| -> Result<f64> {
            probe[i] = x[i] + offset;
            let v = f(&probe);
            probe[i] = x[i];
            v
        };
        let (p1, m1, p2, m2) = (at(step)?, at(-step)?, at(2.0 * step)?, at(-2.0 * step)?);
        grad.push((8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * step));
    }
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    /// Instances per suite.
    pub instances: usize,
    pub step: f64,
    pub tolerance: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub margin: f64,
    /// Test hook: perturb one analytic gradient entry per instance so every
    /// suite must fail.
    pub corrupt: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            instances: 20,
            step: 1e-4,
            tolerance: 1e-4,
            sigma: 0.5,
            lambda: 0.01,
            margin: 0.2,
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub instances: usize,
    /// Instances discarded for sitting near a non-differentiable point.
    pub redrawn: usize,
    pub max_relative_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub config: GradcheckConfig,
    pub suites: Vec<SuiteResult>,
    pub passed: bool,
}

fn corrupt(grad: &mut [f64], rng: &mut RngStream) {
    let i = rng.index(grad.len());
    grad[i] += 1e-2 * grad[i].abs().max(1.0);
}

/// Class-balanced labels for `classes * per_class` rows in random order.
fn balanced_labels(classes: usize, per_class: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..classes * per_class).map(|i| i / per_class).collect();
    rng.shuffle(&mut labels);
    labels
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.normal())
}

fn matrix_from(shape: (usize, usize), flat: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec(shape, flat.to_vec()).expect("shape matches")
}

fn near_hinge(z: &Array2<f64>, triplets: &[Triplet], margin: f64) -> bool {
    triplets.iter().any(|t| {
        let ap = &z.row(t.anchor) - &z.row(t.positive);
        let an = &z.row(t.anchor) - &z.row(t.negative);
        (ap.dot(&ap) - an.dot(&an) + margin).abs() < HINGE_MARGIN
    })
}

struct Suite {
    name: &'static str,
    worst: f64,
    redrawn: usize,
}

impl Suite {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            worst: 0.0,
            redrawn: 0,
        }
    }

    fn record(&mut self, analytic: &[f64], numeric: &[f64]) {
        self.worst = self.worst.max(max_relative_error(analytic, numeric));
    }

    /// Entries that must vanish identically; anything above roundoff fails.
    fn record_structural_zero(&mut self, analytic: &[f64], scale: f64) {
        if analytic.iter().any(|g| g.abs() > STRUCTURAL_ZERO_TOL * scale) {
            self.worst = f64::INFINITY;
        }
    }

    fn redraw(&mut self) -> Result<()> {
        self.redrawn += 1;
        if self.redrawn > MAX_REDRAWS {
            return Err(Error::Numerical(format!(
                "{}: no differentiable instance after {MAX_REDRAWS} draws",
                self.name
            )));
        }
        Ok(())
    }

    fn finish(self, cfg: &GradcheckConfig) -> SuiteResult {
        SuiteResult {
            name: self.name.to_string(),
            instances: cfg.instances,
            redrawn: self.redrawn,
            max_relative_error: self.worst,
            passed: self.worst < cfg.tolerance,
        }
    }
}

/// SGM loss gradient with respect to the embeddings, class means recomputed
/// at every probe. `d <= 8`, `c <= 4`, batch `<= 24`.
pub fn check_sgm(cfg: &GradcheckConfig, rng: &mut RngStream) -> Result<SuiteResult> {
    let loss = SgmLoss::new(cfg.sigma, cfg.lambda);
    let mut suite = Suite::new("sgm");
    for _ in 0..cfg.instances {
        let c = 2 + rng.index(3);
        let per_class = 1 + rng.index(24 / c);
        let d = 1 + rng.index(8);
        let labels = balanced_labels(c, per_class, rng);
        let z = gaussian_matrix(labels.len(), d, rng);
        let mut analytic = loss.evaluate(z.view(), &labels, c)?.grad.into_raw_vec_and_offset().0;
        if cfg.corrupt {
            corrupt(&mut analytic, rng);
        }
        let flat = z.iter().copied().collect::<Vec<_>>();
        let numeric = numeric_gradient(
            |x| Ok(loss.evaluate(matrix_from(z.dim(), x).view(), &labels, c)?.loss),
            &flat,
            cfg.step,
        )?;
        suite.record(&analytic, &numeric);
    }
    Ok(suite.finish(cfg))
}

/// Triplet loss gradient with respect to the embeddings over 10 random
/// triplets, away from the hinge.
pub fn check_triplet(cfg: &GradcheckConfig, rng: &mut RngStream) -> Result<SuiteResult> {
    let mut suite = Suite::new("triplet");
    let mut done = 0;
    while done < cfg.instances {
        let c = 2 + rng.index(3);
        let per_class = 2 + rng.index(24 / c - 1);
        let d = 1 + rng.index(8);
        let labels = balanced_labels(c, per_class, rng);
        let z = gaussian_matrix(labels.len(), d, rng);
        let triplets = sample_triplets(&labels, 10, rng)?;
        if near_hinge(&z, &triplets, cfg.margin) {
            suite.redraw()?;
            continue;
        }
        let (_, grad) = triplet_loss(z.view(), &triplets, cfg.margin)?;
        let mut analytic = grad.into_raw_vec_and_offset().0;
        if cfg.corrupt {
            corrupt(&mut analytic, rng);
        }
        let flat = z.iter().copied().collect::<Vec<_>>();
        let numeric = numeric_gradient(
            |x| Ok(triplet_loss(matrix_from(z.dim(), x).view(), &triplets, cfg.margin)?.0),
            &flat,
            cfg.step,
        )?;
        suite.record(&analytic, &numeric);
        done += 1;
    }
    Ok(suite.finish(cfg))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Composed {
    Sgm,
    Triplet,
}

fn random_spec(rng: &mut RngStream) -> EncoderSpec {
    let depth = 1 + rng.index(3);
    let hidden = (0..depth).map(|_| 2 + rng.index(15)).collect();
    let activation = if rng.index(2) == 0 {
        Activation::Relu
    } else {
        Activation::Tanh
    };
    EncoderSpec::new(1 + rng.index(6), hidden, 1 + rng.index(8), activation)
}

/// A loss composed with the encoder, differentiated with respect to every
/// weight and bias. Up to 3 hidden layers of width <= 16, batch <= 8.
fn check_composed(which: Composed, cfg: &GradcheckConfig, rng: &mut RngStream) -> Result<SuiteResult> {
    let mut suite = Suite::new(match which {
        Composed::Sgm => "encoder+sgm",
        Composed::Triplet => "encoder+triplet",
    });
    let sgm = SgmLoss::new(cfg.sigma, cfg.lambda);
    let mut done = 0;
    while done < cfg.instances {
        let spec = random_spec(rng);
        let params = EncoderParams::init(spec.clone(), rng)?;
        let c = 2;
        let per_class = 2 + rng.index(3);
        let labels = balanced_labels(c, per_class, rng);
        let x = gaussian_matrix(labels.len(), spec.input_dim, rng);
        let (z, cache) = params.forward(x.view())?;
        if cache.min_abs_hidden_pre_activation() < KINK_MARGIN {
            suite.redraw()?;
            continue;
        }
        let triplets = match which {
            Composed::Sgm => Vec::new(),
            Composed::Triplet => {
                let t = sample_triplets(&labels, 10, rng)?;
                if near_hinge(&z, &t, cfg.margin) {
                    suite.redraw()?;
                    continue;
                }
                t
            }
        };
        let loss_and_grad = |z: &Array2<f64>| -> Result<(f64, Array2<f64>)> {
            match which {
                Composed::Sgm => {
                    let out = sgm.evaluate(z.view(), &labels, c)?;
                    Ok((out.loss, out.grad))
                }
                Composed::Triplet => triplet_loss(z.view(), &triplets, cfg.margin),
            }
        };
        let (_, dl_dz) = loss_and_grad(&z)?;
        let mut analytic = params.backward(&cache, dl_dz.view())?.as_slice().to_vec();
        if cfg.corrupt {
            corrupt(&mut analytic, rng);
        }
        let numeric = numeric_gradient(
            |theta| {
                let probe = EncoderParams::from_flat(spec.clone(), theta.to_vec())?;
                Ok(loss_and_grad(&probe.embed(x.view())?)?.0)
            },
            params.as_slice(),
            cfg.step,
        )?;
        if which == Composed::Triplet {
            // A bias whose effect reaches every embedding as the same shift is
            // invisible to a distance loss: its gradient is exactly zero and the
            // finite difference there is pure roundoff.
            let shifts = translation_biases(&params, &cache)?;
            let scale = analytic.iter().fold(1.0f64, |m, g| m.max(g.abs()));
            let zeros: Vec<f64> = shifts.iter().map(|&i| analytic[i]).collect();
            suite.record_structural_zero(&zeros, scale);
            let keep = |i: &usize| !shifts.contains(i);
            let a: Vec<f64> = (0..analytic.len()).filter(keep).map(|i| analytic[i]).collect();
            let n: Vec<f64> = (0..numeric.len()).filter(keep).map(|i| numeric[i]).collect();
            suite.record(&a, &n);
        } else {
            suite.record(&analytic, &numeric);
        }
        done += 1;
    }
    Ok(suite.finish(cfg))
}

/// Flat indices of bias entries that move all embedding rows identically.
fn translation_biases(params: &EncoderParams, cache: &ForwardCache) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for layer in params.layout() {
        for (unit, flat) in layer.bias_range().enumerate() {
            let t = params.bias_tangent(cache, layer.index, unit)?;
            let first = t.row(0);
            if t.rows().into_iter().all(|r| r == first) {
                out.push(flat);
            }
        }
    }
    Ok(out)
}

/// Runs every suite from substreams of `seed` so suites do not share draws.
pub fn run_gradcheck(cfg: &GradcheckConfig, seed: u64) -> Result<GradcheckReport> {
    if cfg.instances == 0 {
        return Err(Error::contract("gradcheck needs at least one instance per suite"));
    }
    if !(cfg.step > 0.0) || !(cfg.tolerance > 0.0) {
        return Err(Error::contract("step and tolerance must be positive"));
    }
    let suites = vec![
        check_sgm(cfg, &mut RngStream::substream(seed, 1))?,
        check_triplet(cfg, &mut RngStream::substream(seed, 2))?,
        check_composed(Composed::Sgm, cfg, &mut RngStream::substream(seed, 3))?,
        check_composed(Composed::Triplet, cfg, &mut RngStream::substream(seed, 4))?,
    ];
    let passed = suites.iter().all(|s| s.passed);
    Ok(GradcheckReport {
        config: cfg.clone(),
        suites,
        passed,
    })
}
