//! Isotropic Gaussian class-conditional densities in embedding space, the
//! Bayes posterior over classes, the structured Gaussian manifold (SGM) loss
//! and posterior-argmax prediction.
//!
//! Every class `j` is modelled as `N(mu_j, sigma^2 I)` with prior `p_j`. The
//! posterior of class `j` at embedding `z` is
//!
//! ```text
//! P(j | z) = p_j N(z; mu_j, sigma^2 I) / sum_k p_k N(z; mu_k, sigma^2 I)
//! ```
//!
//! and is evaluated from log-joints with the maximum shifted out, so large
//! distances never overflow or underflow to an all-zero row.
//!
//! The SGM loss on a batch `Z` with labels `y` is
//!
//! ```text
//! L = (1/B) sum_i ||P(. | z_i) - onehot(y_i)||^2 + (lambda/B) sum_i ||z_i||
//! ```
//!
//! where the class means are the per-class batch means of `Z`. Those means
//! are a function of the batch, so the gradient `dL/dZ` includes the path
//! through them.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{argmax_first, log_sum_exp, matrix_rows, squared_distance};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Per-class means with a shared isotropic scale and class priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassGaussians {
    #[serde(with = "matrix_rows")]
    means: Array2<f64>,
    sigma: f64,
    priors: Vec<f64>,
}

impl ClassGaussians {
    pub fn new(means: Array2<f64>, sigma: f64, priors: Vec<f64>) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::contract(format!("sigma must be positive, got {sigma}")));
        }
        if means.nrows() == 0 {
            return Err(Error::contract("at least one class mean is required"));
        }
        if priors.len() != means.nrows() {
            return Err(Error::contract(format!(
                "{} priors for {} classes",
                priors.len(),
                means.nrows()
            )));
        }
        if priors.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::contract("priors must be nonnegative"));
        }
        let total: f64 = priors.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::contract(format!("priors sum to {total}, not 1")));
        }
        Ok(Self {
            means,
            sigma,
            priors,
        })
    }

    /// Equal priors `1/c`.
    pub fn uniform(means: Array2<f64>, sigma: f64) -> Result<Self> {
        let c = means.nrows();
        Self::new(means, sigma, vec![1.0 / c as f64; c])
    }

    pub fn means(&self) -> &Array2<f64> {
        &self.means
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn num_classes(&self) -> usize {
        self.means.nrows()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    /// `log p_j + log N(z; mu_j, sigma^2 I)` for every class.
    pub fn log_joint(&self, z: ArrayView1<f64>) -> Vec<f64> {
        let d = self.dim() as f64;
        let norm = -0.5 * d * LN_2PI - d * self.sigma.ln();
        let inv = 1.0 / (2.0 * self.sigma * self.sigma);
        self.means
            .rows()
            .into_iter()
            .zip(&self.priors)
            .map(|(mu, &p)| p.ln() + norm - squared_distance(z, mu) * inv)
            .collect()
    }

    /// Bayes posterior over classes at `z`.
    pub fn posterior(&self, z: ArrayView1<f64>) -> Vec<f64> {
        let logs = self.log_joint(z);
        let lse = log_sum_exp(&logs);
        logs.iter().map(|l| (l - lse).exp()).collect()
    }

    /// Most probable class; ties go to the smallest class id.
    pub fn predict(&self, z: ArrayView1<f64>) -> usize {
        argmax_first(&self.log_joint(z))
    }

    pub fn predict_batch(&self, z: ArrayView2<f64>) -> Vec<usize> {
        z.rows().into_iter().map(|row| self.predict(row)).collect()
    }
}

/// `log N(z; mu, sigma^2 I)`.
pub fn log_density(z: ArrayView1<f64>, mu: ArrayView1<f64>, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::contract(format!("sigma must be positive, got {sigma}")));
    }
    if z.len() != mu.len() {
        return Err(Error::Dimension(format!("z has {} dims, mean has {}", z.len(), mu.len())));
    }
    let d = z.len() as f64;
    Ok(-0.5 * d * LN_2PI - d * sigma.ln() - squared_distance(z, mu) / (2.0 * sigma * sigma))
}

fn check_labels(labels: &[usize], rows: usize, num_classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::contract(format!(
            "{} labels for {} embeddings",
            labels.len(),
            rows
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::contract(format!("label {bad} out of range for {num_classes} classes")));
    }
    Ok(())
}

/// Per-class arithmetic means of the rows of `z`.
pub fn estimate_class_means(z: ArrayView2<f64>, labels: &[usize], num_classes: usize) -> Result<Array2<f64>> {
    Ok(class_means_and_counts(z, labels, num_classes)?.0)
}

fn class_means_and_counts(
    z: ArrayView2<f64>,
    labels: &[usize],
    num_classes: usize,
) -> Result<(Array2<f64>, Vec<usize>)> {
    check_labels(labels, z.nrows(), num_classes)?;
    let mut sums = Array2::<f64>::zeros((num_classes, z.ncols()));
    let mut counts = vec![0usize; num_classes];
    for (row, &label) in z.rows().into_iter().zip(labels) {
        let mut target = sums.row_mut(label);
        target += &row;
        counts[label] += 1;
    }
    for (j, &n) in counts.iter().enumerate() {
        if n == 0 {
            return Err(Error::MissingClass { class: j });
        }
        sums.row_mut(j).mapv_inplace(|v| v / n as f64);
    }
    Ok((sums, counts))
}

/// Hyperparameters of the SGM loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgmLoss {
    pub sigma: f64,
    /// Weight of the mean embedding-norm regularizer.
    pub lambda: f64,
    /// Class priors; `None` means uniform.
    pub priors: Option<Vec<f64>>,
}

impl Default for SgmLoss {
    fn default() -> Self {
        Self {
            sigma: 0.5,
            lambda: 0.01,
            priors: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SgmLossOutput {
    pub loss: f64,
    /// Posterior mean squared error part of `loss`.
    pub rep_loss: f64,
    /// Norm regularizer part of `loss`.
    pub reg_loss: f64,
    pub grad: Array2<f64>,
    /// Row `i` is the posterior over classes for sample `i`.
    pub posteriors: Array2<f64>,
    /// The Gaussians fitted to this batch.
    pub gaussians: ClassGaussians,
}

impl SgmLoss {
    pub fn new(sigma: f64, lambda: f64) -> Self {
        Self {
            sigma,
            lambda,
            priors: None,
        }
    }

    fn gaussians(&self, means: Array2<f64>) -> Result<ClassGaussians> {
        match &self.priors {
            Some(p) => ClassGaussians::new(means, self.sigma, p.clone()),
            None => ClassGaussians::uniform(means, self.sigma),
        }
    }

    /// Loss, posteriors and the full gradient with respect to `z`.
    pub fn evaluate(&self, z: ArrayView2<f64>, labels: &[usize], num_classes: usize) -> Result<SgmLossOutput> {
        if !(self.lambda >= 0.0) {
            return Err(Error::contract(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        let (means, counts) = class_means_and_counts(z, labels, num_classes)?;
        let g = self.gaussians(means)?;
        let (b, d) = z.dim();
        let c = num_classes;
        let inv_var = 1.0 / (self.sigma * self.sigma);
        let scale = 1.0 / b as f64;

        let mut posteriors = Array2::<f64>::zeros((b, c));
        let mut grad = Array2::<f64>::zeros((b, d));
        let mut grad_means = Array2::<f64>::zeros((c, d));
        let mut rep = 0.0;
        let mut dl_da = vec![0.0; c];

        for (i, zi) in z.rows().into_iter().enumerate() {
            let post = g.posterior(zi);
            // dL/dP_ij = 2 (P_ij - Y_ij) / B, pushed back through the softmax.
            let mut inner = 0.0;
            for (j, &p) in post.iter().enumerate() {
                let r = p - if j == labels[i] { 1.0 } else { 0.0 };
                rep += r * r;
                dl_da[j] = 2.0 * r * scale;
                inner += dl_da[j] * p;
            }
            for j in 0..c {
                dl_da[j] = post[j] * (dl_da[j] - inner);
            }
            // a_ij = ... - ||z_i - mu_j||^2 / (2 sigma^2)
            for (j, mu) in g.means().rows().into_iter().enumerate() {
                let w = dl_da[j] * inv_var;
                if w == 0.0 {
                    continue;
                }
                for k in 0..d {
                    let diff = zi[k] - mu[k];
                    grad[[i, k]] -= w * diff;
                    grad_means[[j, k]] += w * diff;
                }
            }
            posteriors.row_mut(i).assign(&Array1::from(post));
        }

        // mu_j is the mean of its class rows, so each row receives dL/dmu_j / n_j.
        for (i, &label) in labels.iter().enumerate() {
            let share = 1.0 / counts[label] as f64;
            for k in 0..d {
                grad[[i, k]] += grad_means[[label, k]] * share;
            }
        }

        let mut reg = 0.0;
        if self.lambda > 0.0 {
            let coef = self.lambda * scale;
            for (i, zi) in z.rows().into_iter().enumerate() {
                let norm = zi.dot(&zi).sqrt();
                reg += norm;
                if norm > 0.0 {
                    for k in 0..d {
                        grad[[i, k]] += coef * zi[k] / norm;
                    }
                }
            }
            reg *= coef;
        }

        let rep_loss = rep * scale;
        Ok(SgmLossOutput {
            loss: rep_loss + reg,
            rep_loss,
            reg_loss: reg,
            grad,
            posteriors,
            gaussians: g,
        })
    }
}
