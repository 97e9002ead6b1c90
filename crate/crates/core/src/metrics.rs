//! Evaluation of a distance matrix against ground-truth categories.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::clusterops::{majorities, majority_count, Clustering};
use crate::dataset::{Dataset, Label};
use crate::estimator::DistanceMatrix;
use crate::{Error, Result};

/// Upper-triangle cluster pairs split by whether their majority categories agree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairPartition {
    pub same: Vec<(usize, usize)>,
    pub diff: Vec<(usize, usize)>,
}

impl PairPartition {
    pub fn from_majorities(majority: &[Label]) -> Self {
        let k = majority.len();
        let (mut same, mut diff) = (Vec::new(), Vec::new());
        for i in 0..k {
            for j in i + 1..k {
                if majority[i] == majority[j] {
                    same.push((i, j));
                } else {
                    diff.push((i, j));
                }
            }
        }
        Self { same, diff }
    }

    pub fn new(clustering: &Clustering, dataset: &Dataset) -> Result<Self> {
        Ok(Self::from_majorities(&majorities(clustering, dataset)?))
    }
}

/// AUROC of `positives` against `negatives`: the probability that a random
/// negative scores below a random positive, ties counted as one half.
///
/// Computed from midranks (Mann-Whitney U) in `O(n log n)`.
pub fn auroc(negatives: &[f64], positives: &[f64]) -> Result<f64> {
    if negatives.is_empty() || positives.is_empty() {
        return Err(Error::UndefinedMetric("AUROC needs both classes".into()));
    }
    let mut all: Vec<(f64, bool)> = negatives
        .iter()
        .map(|&v| (v, false))
        .chain(positives.iter().map(|&v| (v, true)))
        .collect();
    if all.iter().any(|(v, _)| v.is_nan()) {
        return Err(Error::UndefinedMetric("NaN score".into()));
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Twice the positive rank sum, so midranks of ties stay integral.
    let mut twice_rank_sum: u64 = 0;
    let mut start = 0;
    while start < all.len() {
        let mut end = start;
        while end < all.len() && all[end].0 == all[start].0 {
            end += 1;
        }
        let twice_midrank = (start + 1 + end) as u64; // ranks start+1 ..= end
        let pos_in_group = all[start..end].iter().filter(|e| e.1).count() as u64;
        twice_rank_sum += twice_midrank * pos_in_group;
        start = end;
    }
    let n_pos = positives.len() as u64;
    let n_neg = negatives.len() as u64;
    // 2U = 2R - n_pos(n_pos+1)
    let twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    Ok((twice_u as f64 / 2.0) / (n_pos * n_neg) as f64)
}

/// `Q(D) = P(D_same < D_diff)` as an AUROC with different-category pairs positive.
pub fn quality_from_majorities(matrix: &DistanceMatrix, majority: &[Label]) -> Result<f64> {
    if majority.len() != matrix.k() {
        return Err(Error::Consistency(format!(
            "{} majority categories for a {}-cluster matrix",
            majority.len(),
            matrix.k()
        )));
    }
    let parts = PairPartition::from_majorities(majority);
    if parts.same.is_empty() || parts.diff.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "quality needs same- and different-category pairs ({} same, {} different)",
            parts.same.len(),
            parts.diff.len()
        )));
    }
    let scores = |pairs: &[(usize, usize)]| pairs.iter().map(|&(i, j)| matrix.get(i, j)).collect::<Vec<_>>();
    auroc(&scores(&parts.same), &scores(&parts.diff))
}

/// Quality of `matrix` for the clusters of `clustering` (matched by cluster id).
pub fn quality(matrix: &DistanceMatrix, clustering: &Clustering, dataset: &Dataset) -> Result<f64> {
    let majority = majorities(&aligned(matrix, clustering)?, dataset)?;
    quality_from_majorities(matrix, &majority)
}

/// The clustering reordered to follow the matrix's cluster ids.
fn aligned(matrix: &DistanceMatrix, clustering: &Clustering) -> Result<Clustering> {
    if matrix.k() != clustering.k() {
        return Err(Error::Consistency(format!(
            "matrix has {} clusters, clustering has {}",
            matrix.k(),
            clustering.k()
        )));
    }
    let order = matrix
        .cluster_ids()
        .iter()
        .map(|&id| {
            clustering
                .position_of(id)
                .ok_or_else(|| Error::Consistency(format!("cluster id {id} not in clustering")))
        })
        .collect::<Result<Vec<_>>>()?;
    clustering.reordered(&order)
}

/// `A(D)`: mean of the strict upper triangle.
pub fn average_accuracy(matrix: &DistanceMatrix) -> Result<f64> {
    let k = matrix.k();
    if k < 2 {
        return Err(Error::UndefinedMetric("average accuracy needs 2 clusters".into()));
    }
    let mut sum = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            sum += matrix.get(i, j);
        }
    }
    Ok(sum / (k * (k - 1) / 2) as f64)
}

/// Fraction of observations that carry their cluster's majority category.
pub fn purity(clustering: &Clustering, dataset: &Dataset) -> Result<f64> {
    if clustering.is_empty() {
        return Err(Error::UndefinedMetric("purity of an empty clustering".into()));
    }
    let mut agree = 0;
    for c in clustering.clusters() {
        agree += majority_count(&c.members, dataset)?;
    }
    Ok(agree as f64 / clustering.len() as f64)
}

/// Number of distinct majority categories.
pub fn unique_majorities(clustering: &Clustering, dataset: &Dataset) -> Result<usize> {
    Ok(majorities(clustering, dataset)?.into_iter().collect::<BTreeSet<_>>().len())
}

/// Ranks with ties averaged, 1-based.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let r = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation; `None` when either series is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (midranks(a), midranks(b));
    let mean = (a.len() as f64 + 1.0) / 2.0;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - mean) * (y - mean);
        va += (x - mean) * (x - mean);
        vb += (y - mean) * (y - mean);
    }
    if va == 0.0 || vb == 0.0 {
        None
    } else {
        Some(cov / (va * vb).sqrt())
    }
}

/// Everything `eval` reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub quality: Option<f64>,
    pub average_accuracy: f64,
    pub purity: Option<f64>,
    pub unique_majorities: Option<usize>,
}
