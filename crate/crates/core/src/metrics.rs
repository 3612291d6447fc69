//! Evaluation protocol: NMI, macro precision/recall/F1, Recall@K and Acc@K
//! retrieval curves, KNN and Gaussian-posterior classification.

use std::collections::HashMap;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_manifold::ClassGaussians;
use crate::numerics::squared_distance;

/// K grid used for retrieval curves by default.
pub const DEFAULT_KS: [usize; 6] = [1, 2, 4, 8, 16, 32];
/// Neighbour count for KNN classification by default.
pub const DEFAULT_KNN_K: usize = 11;

fn entropy(counts: impl Iterator<Item = usize>, total: f64) -> f64 {
    counts
        .filter(|&n| n > 0)
        .map(|n| {
            let p = n as f64 / total;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information over the mean of the two entropies.
///
/// Two single-block partitions score 1; exactly one single-block partition
/// scores 0.
pub fn nmi(assignments: &[usize], labels: &[usize]) -> Result<f64> {
    if assignments.len() != labels.len() {
        return Err(Error::contract(format!(
            "nmi inputs differ in length: {} vs {}",
            assignments.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::contract("nmi of empty partitions"));
    }
    let total = labels.len() as f64;
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut left: HashMap<usize, usize> = HashMap::new();
    let mut right: HashMap<usize, usize> = HashMap::new();
    for (&a, &l) in assignments.iter().zip(labels) {
        *joint.entry((a, l)).or_default() += 1;
        *left.entry(a).or_default() += 1;
        *right.entry(l).or_default() += 1;
    }
    let h_a = entropy(left.values().copied(), total);
    let h_l = entropy(right.values().copied(), total);
    match (left.len() == 1, right.len() == 1) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    // Sum in a fixed order so the value does not depend on hash iteration.
    let mut cells: Vec<_> = joint.into_iter().collect();
    cells.sort_unstable();
    let mi: f64 = cells
        .into_iter()
        .map(|((a, l), n)| {
            let p = n as f64 / total;
            let pa = left[&a] as f64 / total;
            let pl = right[&l] as f64 / total;
            p * (p / (pa * pl)).ln()
        })
        .sum();
    Ok((mi / ((h_a + h_l) / 2.0)).clamp(0.0, 1.0))
}

/// `2PR/(P+R)`, with `0/0` taken as 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    /// Macro average over all `c` classes.
    pub precision: f64,
    /// Macro average over all `c` classes.
    pub recall: f64,
    /// Harmonic mean of the macro precision and macro recall.
    pub f1: f64,
    pub per_class: Vec<ClassScores>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn classification_report(preds: &[usize], labels: &[usize], num_classes: usize) -> Result<ClassificationReport> {
    if preds.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::contract("classification report of no samples"));
    }
    if let Some(&bad) = preds.iter().chain(labels).find(|&&l| l >= num_classes) {
        return Err(Error::contract(format!("class id {bad} out of range for {num_classes} classes")));
    }
    let mut confusion = vec![vec![0usize; num_classes]; num_classes];
    for (&p, &l) in preds.iter().zip(labels) {
        confusion[l][p] += 1;
    }
    let correct: usize = (0..num_classes).map(|j| confusion[j][j]).sum();
    let per_class: Vec<ClassScores> = (0..num_classes)
        .map(|j| {
            let predicted: usize = (0..num_classes).map(|t| confusion[t][j]).sum();
            let support: usize = confusion[j].iter().sum();
            let ratio = |n: usize, d: usize| if d > 0 { n as f64 / d as f64 } else { 0.0 };
            let precision = ratio(confusion[j][j], predicted);
            let recall = ratio(confusion[j][j], support);
            ClassScores {
                precision,
                recall,
                f1: f1(precision, recall),
                support,
            }
        })
        .collect();
    let c = num_classes as f64;
    let precision = per_class.iter().map(|s| s.precision).sum::<f64>() / c;
    let recall = per_class.iter().map(|s| s.recall).sum::<f64>() / c;
    Ok(ClassificationReport {
        accuracy: correct as f64 / labels.len() as f64,
        precision,
        recall,
        f1: f1(precision, recall),
        per_class,
        confusion,
    })
}

/// The `k` rows of `db` nearest to `query` as `(row, squared distance)`,
/// ascending by distance then row index, skipping `exclude`.
pub fn nearest_neighbors(
    db: ArrayView2<f64>,
    query: ArrayView1<f64>,
    k: usize,
    exclude: Option<usize>,
) -> Vec<(usize, f64)> {
    let mut ranked: Vec<(usize, f64)> = db
        .rows()
        .into_iter()
        .enumerate()
        .filter(|&(i, _)| Some(i) != exclude)
        .map(|(i, row)| (i, squared_distance(row, query)))
        .collect();
    let by_distance = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
    if k < ranked.len() {
        ranked.select_nth_unstable_by(k, by_distance);
        ranked.truncate(k);
    }
    ranked.sort_unstable_by(by_distance);
    ranked
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalCurve {
    pub ks: Vec<usize>,
    pub recall_at_k: Vec<f64>,
    pub acc_at_k: Vec<f64>,
}

impl RetrievalCurve {
    pub fn recall(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.recall_at_k[i])
    }

    pub fn acc(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.acc_at_k[i])
    }
}

/// Every sample queries the rest of the set (itself excluded). Recall@K is
/// the fraction of queries with a same-class item among the K nearest;
/// Acc@K the mean same-class fraction of those K.
pub fn retrieval_curve(z: ArrayView2<f64>, labels: &[usize], ks: &[usize]) -> Result<RetrievalCurve> {
    let m = z.nrows();
    if labels.len() != m {
        return Err(Error::contract(format!("{m} embeddings for {} labels", labels.len())));
    }
    if m < 2 {
        return Err(Error::contract("retrieval needs at least two samples"));
    }
    if ks.is_empty() || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::contract(format!("K list {ks:?} must be nonempty and strictly ascending")));
    }
    if let Some(&bad) = ks.iter().find(|&&k| k == 0 || k >= m) {
        return Err(Error::contract(format!("K={bad} outside 1..{m} for {m} samples")));
    }
    let k_max = *ks.last().expect("nonempty");
    let mut hits = vec![0usize; ks.len()];
    let mut same_fraction = vec![0.0; ks.len()];
    for q in 0..m {
        let neighbors = nearest_neighbors(z, z.row(q), k_max, Some(q));
        let mut same = 0usize;
        let mut first_hit = None;
        let mut slot = 0;
        for (rank, &(i, _)) in neighbors.iter().enumerate() {
            if labels[i] == labels[q] {
                same += 1;
                first_hit.get_or_insert(rank);
            }
            while slot < ks.len() && ks[slot] == rank + 1 {
                same_fraction[slot] += same as f64 / ks[slot] as f64;
                if first_hit.is_some() {
                    hits[slot] += 1;
                }
                slot += 1;
            }
        }
    }
    Ok(RetrievalCurve {
        ks: ks.to_vec(),
        recall_at_k: hits.iter().map(|&h| h as f64 / m as f64).collect(),
        acc_at_k: same_fraction.iter().map(|&s| s / m as f64).collect(),
    })
}

/// Majority vote among the `k` nearest training rows. Vote ties go to the
/// tied class whose member ranks nearest; distance ties to the lower row.
pub fn knn_classify(
    train_z: ArrayView2<f64>,
    train_labels: &[usize],
    query_z: ArrayView2<f64>,
    k: usize,
) -> Result<Vec<usize>> {
    let n = train_z.nrows();
    if n == 0 {
        return Err(Error::contract("KNN needs a nonempty training set"));
    }
    if train_labels.len() != n {
        return Err(Error::contract(format!("{n} training rows for {} labels", train_labels.len())));
    }
    if k == 0 || k > n {
        return Err(Error::contract(format!("K={k} outside 1..={n}")));
    }
    if query_z.ncols() != train_z.ncols() {
        return Err(Error::Dimension(format!(
            "query dimension {} differs from training dimension {}",
            query_z.ncols(),
            train_z.ncols()
        )));
    }
    let num_classes = train_labels.iter().max().map_or(0, |&l| l + 1);
    Ok(query_z
        .rows()
        .into_iter()
        .map(|q| {
            let neighbors = nearest_neighbors(train_z, q, k, None);
            let mut votes = vec![0usize; num_classes];
            for &(i, _) in &neighbors {
                votes[train_labels[i]] += 1;
            }
            let top = *votes.iter().max().expect("nonempty");
            neighbors
                .iter()
                .map(|&(i, _)| train_labels[i])
                .find(|&c| votes[c] == top)
                .expect("some neighbour carries the top vote")
        })
        .collect())
}

/// Row-wise posterior argmax under `g`.
pub fn gaussian_classify(query_z: ArrayView2<f64>, g: &ClassGaussians) -> Result<Vec<usize>> {
    if query_z.ncols() != g.dim() {
        return Err(Error::Dimension(format!(
            "query dimension {} differs from Gaussian dimension {}",
            query_z.ncols(),
            g.dim()
        )));
    }
    Ok(g.predict_batch(query_z))
}
