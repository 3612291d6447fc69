//! Triplet loss baseline with uniform random triplet sampling.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Row indices into a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

impl Triplet {
    pub fn is_valid(&self, labels: &[usize]) -> bool {
        let n = labels.len();
        self.anchor < n
            && self.positive < n
            && self.negative < n
            && self.anchor != self.positive
            && labels[self.anchor] == labels[self.positive]
            && labels[self.anchor] != labels[self.negative]
    }
}

/// Draws `count` triplets uniformly from the set of all valid triplets.
///
/// An anchor `i` in a class of size `n_c` takes part in `(n_c - 1)(m - n_c)`
/// triplets, so anchors are drawn with that weight and the positive and
/// negative are then uniform. Every triplet costs exactly three draws.
pub fn sample_triplets(labels: &[usize], count: usize, rng: &mut RngStream) -> Result<Vec<Triplet>> {
    if count == 0 {
        return Err(Error::contract("triplet count must be positive"));
    }
    let m = labels.len();
    let num_classes = labels.iter().max().map_or(0, |&l| l + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    let mut cumulative = Vec::with_capacity(m);
    let mut total = 0u128;
    for &l in labels {
        let n_c = members[l].len();
        total += ((n_c - 1) * (m - n_c)) as u128;
        cumulative.push(total);
    }
    if total == 0 {
        return Err(Error::Infeasible(
            "need a class with two members and at least two classes".to_string(),
        ));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let ticket = (rng.next_u64() as u128 * total) >> 64;
        let anchor = cumulative.partition_point(|&c| c <= ticket);
        let class = labels[anchor];
        let same = &members[class];
        // Positive: uniform over same-class members other than the anchor.
        let mut p = rng.index(same.len() - 1);
        if same[p] >= anchor {
            p += 1;
        }
        let positive = same[p];
        // Negative: uniform over the m - n_c rows of other classes.
        let mut k = rng.index(m - same.len());
        let mut negative = 0;
        for (i, &l) in labels.iter().enumerate() {
            if l != class {
                if k == 0 {
                    negative = i;
                    break;
                }
                k -= 1;
            }
        }
        out.push(Triplet {
            anchor,
            positive,
            negative,
        });
    }
    Ok(out)
}

/// Mean hinge `max(0, ||a - p||^2 - ||a - n||^2 + margin)` over triplets and
/// its gradient with respect to every row of `z`.
pub fn triplet_loss(z: ArrayView2<f64>, triplets: &[Triplet], margin: f64) -> Result<(f64, Array2<f64>)> {
    if triplets.is_empty() {
        return Err(Error::contract("triplet list is empty"));
    }
    if !(margin >= 0.0) {
        return Err(Error::contract(format!("margin must be nonnegative, got {margin}")));
    }
    let m = z.nrows();
    if let Some(t) = triplets
        .iter()
        .find(|t| t.anchor >= m || t.positive >= m || t.negative >= m)
    {
        return Err(Error::contract(format!("triplet {t:?} out of range for {m} rows")));
    }
    let scale = 1.0 / triplets.len() as f64;
    let mut grad = Array2::<f64>::zeros(z.raw_dim());
    let mut loss = 0.0;
    for t in triplets {
        let (a, p, n) = (z.row(t.anchor), z.row(t.positive), z.row(t.negative));
        let ap = &a - &p;
        let an = &a - &n;
        let hinge = ap.dot(&ap) - an.dot(&an) + margin;
        if hinge > 0.0 {
            loss += hinge;
            // d/da = 2(a-p) - 2(a-n) = 2(n-p); d/dp = -2(a-p); d/dn = 2(a-n)
            for k in 0..z.ncols() {
                grad[[t.anchor, k]] += 2.0 * scale * (n[k] - p[k]);
                grad[[t.positive, k]] -= 2.0 * scale * ap[k];
                grad[[t.negative, k]] += 2.0 * scale * an[k];
            }
        }
    }
    Ok((loss * scale, grad))
}
