//! K-means and isotropic Gaussian mixture EM over embeddings, plus medoid
//! and Top-k selection inside a group.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{argmax_first, argmin_first, log_sum_exp, squared_distance, RngStream};

const VARIANCE_FLOOR: f64 = 1e-8;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Iteration limits shared by K-means and EM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iter: usize,
    pub tol: f64,
    /// Independent initialisations; the best fit is kept.
    pub restarts: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-6,
            restarts: 1,
        }
    }
}

fn check_fit_input(z: &ArrayView2<f64>, k: usize, cfg: &FitConfig) -> Result<()> {
    if k == 0 {
        return Err(Error::contract("cluster count must be positive"));
    }
    if z.nrows() < k {
        return Err(Error::contract(format!(
            "{} samples cannot form {k} clusters",
            z.nrows()
        )));
    }
    if cfg.restarts == 0 {
        return Err(Error::contract("restarts must be at least 1"));
    }
    Ok(())
}

/// k-means++ seeding: first seed uniform, then proportional to squared
/// distance to the nearest chosen seed.
pub fn kmeans_plus_plus(z: ArrayView2<f64>, k: usize, rng: &mut RngStream) -> Array2<f64> {
    let m = z.nrows();
    let mut seeds = Array2::zeros((k, z.ncols()));
    let first = rng.index(m);
    seeds.row_mut(0).assign(&z.row(first));
    let mut nearest: Vec<f64> = z.rows().into_iter().map(|r| squared_distance(r, z.row(first))).collect();
    for s in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.uniform() * total;
            let mut chosen = m - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            // Rounding can walk past the last positive weight.
            while nearest[chosen] == 0.0 && chosen > 0 {
                chosen -= 1;
            }
            chosen
        } else {
            rng.index(m)
        };
        seeds.row_mut(s).assign(&z.row(pick));
        for (i, row) in z.rows().into_iter().enumerate() {
            nearest[i] = nearest[i].min(squared_distance(row, z.row(pick)));
        }
    }
    seeds
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmeansResult {
    #[serde(with = "crate::numerics::matrix_rows")]
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after the seeding assignment, every Lloyd step and the final
    /// transfer refinement.
    pub inertia_trace: Vec<f64>,
}

fn assign(z: ArrayView2<f64>, centroids: &Array2<f64>) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let assignments = z
        .rows()
        .into_iter()
        .map(|row| {
            let d: Vec<f64> = centroids.rows().into_iter().map(|c| squared_distance(row, c)).collect();
            let j = argmin_first(&d);
            inertia += d[j];
            j
        })
        .collect();
    (assignments, inertia)
}

fn lloyd(z: ArrayView2<f64>, k: usize, rng: &mut RngStream, cfg: &FitConfig) -> KmeansResult {
    let mut centroids = kmeans_plus_plus(z, k, rng);
    let (mut assignments, mut inertia) = assign(z, &centroids);
    let mut trace = vec![inertia];
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
        let mut counts = vec![0usize; k];
        for (row, &a) in z.rows().into_iter().zip(&assignments) {
            let mut s = sums.row_mut(a);
            s += &row;
            counts[a] += 1;
        }
        let mut updated = centroids.clone();
        for j in 0..k {
            if counts[j] > 0 {
                updated.row_mut(j).assign(&(&sums.row(j) / counts[j] as f64));
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // Re-seed at the sample farthest from its current centroid.
                let far = (0..z.nrows())
                    .map(|i| squared_distance(z.row(i), updated.row(assignments[i])))
                    .collect::<Vec<_>>();
                let i = argmax_first(&far);
                log::warn!("k-means: cluster {j} emptied; re-seeding at sample {i}");
                updated.row_mut(j).assign(&z.row(i));
                assignments[i] = j;
            }
        }
        let moved = centroids
            .rows()
            .into_iter()
            .zip(updated.rows())
            .map(|(a, b)| squared_distance(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        let (next, next_inertia) = assign(z, &centroids);
        let fixpoint = next == assignments;
        assignments = next;
        inertia = next_inertia;
        trace.push(inertia);
        if fixpoint || moved < cfg.tol {
            break;
        }
    }
    if hartigan(z, &mut centroids, &mut assignments, k) {
        let (next, next_inertia) = assign(z, &centroids);
        debug_assert!(next_inertia <= inertia + 1e-9);
        assignments = next;
        inertia = next_inertia;
        trace.push(inertia);
    }
    KmeansResult {
        centroids,
        assignments,
        inertia,
        iterations,
        inertia_trace: trace,
    }
}

/// Single-sample transfers that strictly lower the inertia, with exact
/// centroid updates. Its fixpoints are a subset of Lloyd's, so it only
/// escapes local optima. Returns whether anything moved.
fn hartigan(z: ArrayView2<f64>, centroids: &mut Array2<f64>, assignments: &mut [usize], k: usize) -> bool {
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    let mut any = false;
    let mut changed = true;
    let mut sweeps = 0;
    while changed && sweeps < 100 {
        changed = false;
        sweeps += 1;
        for i in 0..z.nrows() {
            let a = assignments[i];
            if counts[a] < 2 {
                continue;
            }
            let x = z.row(i);
            let na = counts[a] as f64;
            let leave = na / (na - 1.0) * squared_distance(x, centroids.row(a));
            let mut best = (0.0, a);
            for b in (0..k).filter(|&b| b != a) {
                let nb = counts[b] as f64;
                let delta = nb / (nb + 1.0) * squared_distance(x, centroids.row(b)) - leave;
                if delta < best.0 - 1e-12 * leave.max(1.0) {
                    best = (delta, b);
                }
            }
            let b = best.1;
            if b != a {
                let nb = counts[b] as f64;
                let ca = (&centroids.row(a) * na - &x) / (na - 1.0);
                let cb = (&centroids.row(b) * nb + &x) / (nb + 1.0);
                centroids.row_mut(a).assign(&ca);
                centroids.row_mut(b).assign(&cb);
                counts[a] -= 1;
                counts[b] += 1;
                assignments[i] = b;
                changed = true;
                any = true;
            }
        }
    }
    if any {
        // Recompute means exactly to shed drift from the incremental updates.
        let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
        for (row, &a) in z.rows().into_iter().zip(assignments.iter()) {
            let mut s = sums.row_mut(a);
            s += &row;
        }
        for j in 0..k {
            centroids.row_mut(j).assign(&(&sums.row(j) / counts[j] as f64));
        }
    }
    any
}

/// Lloyd iterations from k-means++ seeds followed by single-sample transfer
/// refinement; the lowest-inertia restart wins.
pub fn kmeans(z: ArrayView2<f64>, k: usize, rng: &mut RngStream, cfg: &FitConfig) -> Result<KmeansResult> {
    check_fit_input(&z, k, cfg)?;
    let mut best = lloyd(z, k, rng, cfg);
    for _ in 1..cfg.restarts {
        let next = lloyd(z, k, rng, cfg);
        if next.inertia < best.inertia {
            best = next;
        }
    }
    Ok(best)
}

/// Mixture of isotropic Gaussians `N(mu_k, var_k I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    #[serde(with = "crate::numerics::matrix_rows")]
    pub means: Array2<f64>,
    pub variances: Vec<f64>,
    pub weights: Vec<f64>,
    #[serde(with = "crate::numerics::matrix_rows")]
    pub responsibilities: Array2<f64>,
    pub log_likelihood: f64,
    /// Log-likelihood after the initial and every subsequent E-step.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    /// Set when some component variance hit the floor.
    pub variance_floored: bool,
}

impl GmmModel {
    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    fn log_joint(&self, z: ArrayView1<f64>, out: &mut [f64]) {
        let d = z.len() as f64;
        for (k, mu) in self.means.rows().into_iter().enumerate() {
            let var = self.variances[k];
            out[k] = self.weights[k].ln() - 0.5 * d * (LN_2PI + var.ln()) - squared_distance(z, mu) / (2.0 * var);
        }
    }

    /// Recomputes responsibilities; returns the total log-likelihood.
    fn e_step(&mut self, z: ArrayView2<f64>) -> f64 {
        let k = self.num_components();
        let mut logs = vec![0.0; k];
        let mut total = 0.0;
        for (i, row) in z.rows().into_iter().enumerate() {
            self.log_joint(row, &mut logs);
            let lse = log_sum_exp(&logs);
            total += lse;
            for j in 0..k {
                self.responsibilities[[i, j]] = (logs[j] - lse).exp();
            }
        }
        total
    }

    fn m_step(&mut self, z: ArrayView2<f64>) {
        let (m, d) = z.dim();
        for j in 0..self.num_components() {
            let r = self.responsibilities.column(j);
            let n_j: f64 = r.sum();
            if !(n_j > f64::MIN_POSITIVE) {
                // Component lost all mass; leave it where it is.
                self.weights[j] = f64::MIN_POSITIVE;
                continue;
            }
            let mean = r.dot(&z) / n_j;
            let spread: f64 = z
                .rows()
                .into_iter()
                .zip(r.iter())
                .map(|(row, &w)| w * squared_distance(row, mean.view()))
                .sum();
            let mut var = spread / (d as f64 * n_j);
            if var < VARIANCE_FLOOR {
                log::warn!("EM: component {j} variance {var:e} floored at {VARIANCE_FLOOR:e}");
                var = VARIANCE_FLOOR;
                self.variance_floored = true;
            }
            self.means.row_mut(j).assign(&mean);
            self.variances[j] = var;
            self.weights[j] = n_j / m as f64;
        }
        let total: f64 = self.weights.iter().sum();
        self.weights.iter_mut().for_each(|w| *w /= total);
    }
}

fn em_run(z: ArrayView2<f64>, k: usize, rng: &mut RngStream, cfg: &FitConfig) -> GmmModel {
    let (m, d) = z.dim();
    let means = kmeans_plus_plus(z, k, rng);
    let center = z.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(d));
    let global_var = (z.rows().into_iter().map(|r| squared_distance(r, center.view())).sum::<f64>()
        / (m as f64 * d as f64))
        .max(VARIANCE_FLOOR);
    let mut model = GmmModel {
        means,
        variances: vec![global_var; k],
        weights: vec![1.0 / k as f64; k],
        responsibilities: Array2::zeros((m, k)),
        log_likelihood: f64::NEG_INFINITY,
        log_likelihood_trace: Vec::new(),
        iterations: 0,
        variance_floored: false,
    };
    let mut ll = model.e_step(z);
    model.log_likelihood_trace.push(ll);
    while model.iterations < cfg.max_iter {
        model.iterations += 1;
        model.m_step(z);
        let next = model.e_step(z);
        model.log_likelihood_trace.push(next);
        let gain = next - ll;
        ll = next;
        if gain < cfg.tol {
            break;
        }
    }
    model.log_likelihood = ll;
    model
}

/// EM for an isotropic Gaussian mixture from k-means++ means, a shared
/// initial variance and uniform weights. Stops when the log-likelihood gain
/// drops below `tol`; the restart with the highest log-likelihood wins.
pub fn gmm_em(z: ArrayView2<f64>, k: usize, rng: &mut RngStream, cfg: &FitConfig) -> Result<GmmModel> {
    check_fit_input(&z, k, cfg)?;
    let mut best = em_run(z, k, rng, cfg);
    for _ in 1..cfg.restarts {
        let next = em_run(z, k, rng, cfg);
        if next.log_likelihood > best.log_likelihood {
            best = next;
        }
    }
    if !best.log_likelihood.is_finite() {
        return Err(Error::Numerical("EM log-likelihood is not finite".to_string()));
    }
    Ok(best)
}

/// Most responsible component per sample; ties go to the lower index.
pub fn hard_assign(model: &GmmModel) -> Vec<usize> {
    model
        .responsibilities
        .rows()
        .into_iter()
        .map(|r| argmax_first(r.as_slice().expect("standard layout")))
        .collect()
}

/// Row of `group` closest to the group mean; ties go to the lower row.
pub fn medoid(group: ArrayView2<f64>) -> Result<usize> {
    if group.nrows() == 0 {
        return Err(Error::contract("medoid of an empty group"));
    }
    let mean = group.mean_axis(Axis(0)).expect("nonempty");
    let d: Vec<f64> = group.rows().into_iter().map(|r| squared_distance(r, mean.view())).collect();
    Ok(argmin_first(&d))
}

/// Global indices of the `k` members of `group` nearest its medoid,
/// ascending by distance (ties by index), medoid first.
pub fn top_k_near_medoid(z: ArrayView2<f64>, assignments: &[usize], group: usize, k: usize) -> Result<Vec<usize>> {
    if assignments.len() != z.nrows() {
        return Err(Error::contract("assignments and embeddings differ in length"));
    }
    let members: Vec<usize> = (0..z.nrows()).filter(|&i| assignments[i] == group).collect();
    if members.is_empty() {
        return Err(Error::contract(format!("group {group} has no members")));
    }
    let rows = z.select(Axis(0), &members);
    let center = members[medoid(rows.view())?];
    let mut ranked: Vec<(f64, usize)> = members
        .iter()
        .map(|&i| (squared_distance(z.row(i), z.row(center)), i))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    // A duplicate of the medoid with a lower index would tie at distance 0.
    if let Some(pos) = ranked.iter().position(|&(_, i)| i == center) {
        let entry = ranked.remove(pos);
        ranked.insert(0, entry);
    }
    Ok(ranked.into_iter().take(k).map(|(_, i)| i).collect())
}
