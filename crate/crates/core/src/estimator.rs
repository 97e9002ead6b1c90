//! Holdout estimation of the pairwise balanced-accuracy matrix.
//!
//! Each cluster is split into a training and a validation part. One network
//! with `k` logits is trained on the training parts with the routed balanced
//! loss; after every epoch the validation parts give a balanced accuracy for
//! every pair of clusters. Training stops once the average accuracy `A(D)` has
//! not improved for `patience` epochs, and the matrix with the best `A(D)` is
//! returned.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clusterops::Clustering;
use crate::dataset::Dataset;
use crate::metrics::average_accuracy;
use crate::numcore::{adam_step, AdamConfig, AdamState, Matrix, Network};
use crate::pairloss::{total_loss, ClusterSizes, PairScoreView, Sample};
use crate::seeds;
use crate::{Error, Result};

/// What the entries of a [`DistanceMatrix`] measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixUnit {
    /// Holdout balanced accuracy in `[0, 1]`, diagonal `0.5`.
    BalancedAccuracy,
    /// Average Euclidean distance, diagonal `0`.
    Euclidean,
    /// Total variation distance in `[0, 2]`, diagonal `0`.
    Tvd,
}

/// Symmetric `k × k` matrix of distances between clusters, indexed by position
/// in `cluster_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    cluster_ids: Vec<usize>,
    values: Matrix,
    unit: MatrixUnit,
}

impl DistanceMatrix {
    pub fn new(cluster_ids: Vec<usize>, values: Matrix, unit: MatrixUnit) -> Result<Self> {
        let k = cluster_ids.len();
        if values.rows() != k || values.cols() != k {
            return Err(Error::Shape(format!(
                "{}x{} matrix for {k} clusters",
                values.rows(),
                values.cols()
            )));
        }
        if !values.is_symmetric(0.0) {
            return Err(Error::Consistency("distance matrix is not symmetric".into()));
        }
        let diagonal = match unit {
            MatrixUnit::BalancedAccuracy => 0.5,
            MatrixUnit::Euclidean | MatrixUnit::Tvd => 0.0,
        };
        for i in 0..k {
            if values.get(i, i) != diagonal {
                return Err(Error::Consistency(format!(
                    "diagonal entry {i} is {}, expected {diagonal}",
                    values.get(i, i)
                )));
            }
        }
        let in_range = |v: f64| match unit {
            MatrixUnit::BalancedAccuracy => (0.0..=1.0).contains(&v),
            MatrixUnit::Tvd => (0.0..=2.0).contains(&v),
            MatrixUnit::Euclidean => v >= 0.0,
        };
        if let Some(p) = values.as_slice().iter().position(|&v| !in_range(v)) {
            return Err(Error::Consistency(format!(
                "entry ({}, {}) = {} outside the range of {unit:?}",
                p / k,
                p % k,
                values.as_slice()[p]
            )));
        }
        Ok(Self {
            cluster_ids,
            values,
            unit,
        })
    }

    /// Builds a symmetric matrix from its strict upper triangle, row by row.
    pub fn from_upper<F>(cluster_ids: Vec<usize>, unit: MatrixUnit, mut entry: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> Result<f64>,
    {
        let k = cluster_ids.len();
        let diagonal = if unit == MatrixUnit::BalancedAccuracy { 0.5 } else { 0.0 };
        let mut values = Matrix::zeros(k, k);
        for i in 0..k {
            values.set(i, i, diagonal);
            for j in i + 1..k {
                let v = entry(i, j)?;
                values.set(i, j, v);
                values.set(j, i, v);
            }
        }
        Self::new(cluster_ids, values, unit)
    }

    pub fn k(&self) -> usize {
        self.cluster_ids.len()
    }

    pub fn cluster_ids(&self) -> &[usize] {
        &self.cluster_ids
    }

    pub fn unit(&self) -> MatrixUnit {
        self.unit
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.get(i, j)
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    /// Same matrix with clusters reordered: entry `(a, b)` of the result is
    /// entry `(order[a], order[b])` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let k = self.k();
        let mut seen = vec![false; k];
        if order.len() != k || order.iter().any(|&o| o >= k || std::mem::replace(&mut seen[o], true)) {
            return Err(Error::Usage(format!("{order:?} is not a permutation of 0..{k}")));
        }
        let mut values = Matrix::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                values.set(a, b, self.get(order[a], order[b]));
            }
        }
        Self::new(order.iter().map(|&o| self.cluster_ids[o]).collect(), values, self.unit)
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Fraction of every cluster held out for validation.
    pub val_fraction: f64,
    pub patience: usize,
    pub seed: u64,
    /// Hidden layer widths between the input and the `k` logits.
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 512,
            adam: AdamConfig::default(),
            val_fraction: 0.3,
            patience: 10,
            seed: 0,
            hidden: vec![128, 64],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Usage("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Usage("batch size must be positive".into()));
        }
        if self.patience == 0 {
            return Err(Error::Usage("patience must be positive".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Usage(format!(
                "validation fraction {} is not in (0, 1)",
                self.val_fraction
            )));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Usage("hidden widths must be positive".into()));
        }
        self.adam.validate()
    }

    pub fn train_fraction(&self) -> f64 {
        1.0 - self.val_fraction
    }
}

/// Training and validation members of one cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSplit {
    pub cluster: usize,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Per-cluster holdout partition, in the clustering's cluster order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub clusters: Vec<ClusterSplit>,
    pub train_fraction: f64,
    pub seed: u64,
}

/// Number of training members out of `size`: `floor(fraction·size)`, kept in `1..size`.
pub fn train_count(size: usize, fraction: f64) -> usize {
    // The epsilon keeps products such as 0.7·100 from flooring to 69.
    let n = (fraction * size as f64 + 1e-9).floor() as usize;
    n.clamp(1, size.saturating_sub(1).max(1))
}

/// Randomly partitions every cluster into `floor(fraction·size)` training members
/// and the rest for validation.
///
/// Each cluster draws from its own sub-stream keyed by its id, so the plan for a
/// cluster does not depend on where it appears in the clustering.
pub fn split(clustering: &Clustering, train_fraction: f64, seed: u64) -> Result<SplitPlan> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Usage(format!(
            "train fraction {train_fraction} is not in (0, 1)"
        )));
    }
    let clusters = clustering
        .clusters()
        .iter()
        .map(|c| {
            if c.members.len() < 2 {
                return Err(Error::UnsplittableCluster {
                    cluster: c.id,
                    size: c.members.len(),
                });
            }
            let mut members = c.members.clone();
            members.sort_unstable();
            members.shuffle(&mut seeds::rng_indexed(seed, seeds::SPLIT, c.id as u64));
            let n_train = train_count(members.len(), train_fraction);
            let validation = members.split_off(n_train);
            members.sort_unstable();
            let mut validation = validation;
            validation.sort_unstable();
            Ok(ClusterSplit {
                cluster: c.id,
                train: members,
                validation,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SplitPlan {
        clusters,
        train_fraction,
        seed,
    })
}

/// Balanced accuracy of a pairwise classifier.
///
/// `negatives[m]` is true when the `m`-th observation of the class-0 cluster was
/// predicted as class 1; likewise for `positives` (true = predicted class 1).
pub fn balanced_accuracy(negatives: &[bool], positives: &[bool]) -> Result<f64> {
    if negatives.is_empty() || positives.is_empty() {
        return Err(Error::Usage("balanced accuracy needs both classes".into()));
    }
    let true_neg = negatives.iter().filter(|&&p| !p).count() as f64 / negatives.len() as f64;
    let true_pos = positives.iter().filter(|&&p| p).count() as f64 / positives.len() as f64;
    Ok(0.5 * (true_neg + true_pos))
}

/// Average accuracy after one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub average_accuracy: f64,
    pub train_loss: f64,
}

/// Result of [`estimate`].
#[derive(Debug, Clone)]
pub struct Estimate {
    /// Matrix of the epoch with the best average accuracy.
    pub matrix: DistanceMatrix,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub split: SplitPlan,
}

/// Per-feature standardization fitted on training observations only.
#[derive(Debug, Clone)]
struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Self {
        let rows: Vec<&[f64]> = rows.collect();
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in &rows {
            for (m, v) in mean.iter_mut().zip(*r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in &rows {
            for ((s, v), m) in var.iter_mut().zip(*r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) * s)
            .collect()
    }
}

/// Trains the pairwise network and returns the best balanced-accuracy matrix.
pub fn estimate(dataset: &Dataset, clustering: &Clustering, config: &TrainConfig) -> Result<Estimate> {
    estimate_with(dataset, clustering, config, |_, _, _| {})
}

/// [`estimate`] with a callback invoked after every epoch with the epoch
/// number, that epoch's matrix and the network parameters.
pub fn estimate_with<F>(
    dataset: &Dataset,
    clustering: &Clustering,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<Estimate>
where
    F: FnMut(usize, &DistanceMatrix, &Network),
{
    config.validate()?;
    let k = clustering.k();
    if k < 2 {
        return Err(Error::Degenerate(format!("need at least 2 clusters, got {k}")));
    }
    clustering.check_against(dataset)?;

    // Work in cluster-id order so the result does not depend on input order.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by_key(|&p| clustering.clusters()[p].id);
    let canonical = clustering.reordered(&order)?;

    let plan = split(&canonical, config.train_fraction(), config.seed)?;
    let scaler = Standardizer::fit(
        plan.clusters
            .iter()
            .flat_map(|c| c.train.iter())
            .map(|&id| dataset.features_of(id).expect("checked against dataset")),
        dataset.dim(),
    );
    let load = |ids: &[usize]| -> Vec<Vec<f64>> {
        ids.iter()
            .map(|&id| scaler.apply(dataset.features_of(id).expect("checked against dataset")))
            .collect()
    };
    let train: Vec<(Vec<f64>, usize)> = plan
        .clusters
        .iter()
        .enumerate()
        .flat_map(|(c, s)| load(&s.train).into_iter().map(move |x| (x, c)))
        .collect();
    let validation: Vec<Vec<Vec<f64>>> = plan.clusters.iter().map(|s| load(&s.validation)).collect();
    let sizes = ClusterSizes::new(plan.clusters.iter().map(|c| c.train.len()).collect())?;
    let ids: Vec<usize> = canonical.clusters().iter().map(|c| c.id).collect();

    let mut dims = vec![dataset.dim()];
    dims.extend(&config.hidden);
    dims.push(k);
    let mut net = Network::init(&dims, &mut seeds::rng(config.seed, seeds::INIT))?;
    let mut adam = AdamState::new(&net, config.adam);
    let mut shuffle_rng = seeds::rng(config.seed, seeds::SHUFFLE);
    let mut visit: Vec<usize> = (0..train.len()).collect();

    let mut history = Vec::new();
    let mut best: Option<(f64, usize, DistanceMatrix)> = None;
    let mut stale = 0;
    for epoch in 1..=config.epochs {
        visit.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch_idx in visit.chunks(config.batch_size) {
            let batch: Vec<Sample<'_>> = batch_idx
                .iter()
                .map(|&t| Sample {
                    features: &train[t].0,
                    origin: train[t].1,
                })
                .collect();
            let (loss, grad) = total_loss(&net, &batch, &sizes)?;
            epoch_loss += loss * batch.len() as f64;
            adam_step(&mut net, &grad, &mut adam)?;
        }
        epoch_loss /= train.len() as f64;

        let matrix = validation_matrix(&net, &validation, ids.clone())?;
        let avg = average_accuracy(&matrix)?;
        history.push(EpochRecord {
            epoch,
            average_accuracy: avg,
            train_loss: epoch_loss,
        });
        let restored = restore_order(&matrix, &order)?;
        on_epoch(epoch, &restored, &net);

        match &best {
            Some((best_avg, _, _)) if avg <= best_avg + 1e-12 => {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
            _ => {
                best = Some((avg, epoch, restored));
                stale = 0;
            }
        }
    }

    let (_, best_epoch, matrix) = best.expect("at least one epoch");
    Ok(Estimate {
        matrix,
        best_epoch,
        history,
        split: plan,
    })
}

/// Maps a matrix computed in canonical order back to the caller's cluster order.
fn restore_order(matrix: &DistanceMatrix, order: &[usize]) -> Result<DistanceMatrix> {
    // order[p] is the input position of canonical index p; invert it.
    let mut inverse = vec![0; order.len()];
    for (canonical, &input) in order.iter().enumerate() {
        inverse[input] = canonical;
    }
    matrix.permuted(&inverse)
}

/// Balanced accuracy of every pair on the validation parts.
///
/// Entry `(i, j)`, `i < j`, classifies cluster `i`'s validation members as
/// class 0 and cluster `j`'s as class 1 using `f(x)_ij >= 0.5`; the lower
/// triangle mirrors it.
pub fn validation_matrix(net: &Network, validation: &[Vec<Vec<f64>>], cluster_ids: Vec<usize>) -> Result<DistanceMatrix> {
    let logits: Vec<Vec<Vec<f64>>> = validation
        .par_iter()
        .map(|xs| xs.iter().map(|x| net.forward(x)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    DistanceMatrix::from_upper(cluster_ids, MatrixUnit::BalancedAccuracy, |i, j| {
        let predict = |rows: &[Vec<f64>]| -> Result<Vec<bool>> {
            rows.iter()
                .map(|l| PairScoreView::new(l).predicts_positive(i, j))
                .collect()
        };
        balanced_accuracy(&predict(&logits[i])?, &predict(&logits[j])?)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clusterops::Cluster;

    fn clustering(sizes: &[usize]) -> Clustering {
        let mut next = 0;
        Clustering::new(
            sizes
                .iter()
                .enumerate()
                .map(|(id, &n)| {
                    let members = (next..next + n).collect();
                    next += n;
                    Cluster { id, members }
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn half_split_of_ten() {
        let plan = split(&clustering(&[10]), 0.5, 3).unwrap();
        assert_eq!(plan.clusters[0].train.len(), 5);
        assert_eq!(plan.clusters[0].validation.len(), 5);
    }

    #[test]
    fn seventy_percent_of_hundred() {
        let plan = split(&clustering(&[100]), 0.7, 3).unwrap();
        assert_eq!(plan.clusters[0].train.len(), 70);
        assert_eq!(plan.clusters[0].validation.len(), 30);
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let c = clustering(&[7, 12, 2]);
        let a = split(&c, 0.7, 11).unwrap();
        assert_eq!(a, split(&c, 0.7, 11).unwrap());
        assert_ne!(a, split(&c, 0.7, 12).unwrap());
        for (s, cl) in a.clusters.iter().zip(c.clusters()) {
            let mut all: Vec<usize> = s.train.iter().chain(&s.validation).copied().collect();
            all.sort_unstable();
            assert_eq!(all, cl.members);
            assert!(!s.train.is_empty() && !s.validation.is_empty());
        }
    }

    #[test]
    fn singleton_cluster_cannot_be_split() {
        let err = split(&clustering(&[4, 1]), 0.7, 0).unwrap_err();
        assert!(matches!(err, Error::UnsplittableCluster { cluster: 1, size: 1 }));
    }

    #[test]
    fn train_count_floor_rule() {
        assert_eq!(train_count(100, 0.7), 70);
        assert_eq!(train_count(2, 0.1), 1);
        assert_eq!(train_count(2, 0.99), 1);
        assert_eq!(train_count(50, 0.7), 35);
    }

    #[test]
    fn balanced_accuracy_examples() {
        assert_eq!(balanced_accuracy(&[false, false], &[true]).unwrap(), 1.0);
        assert_eq!(balanced_accuracy(&[true, true, true], &[true, true]).unwrap(), 0.5);
        // 1 of 2 negatives correct, 3 of 4 positives correct.
        let ba = balanced_accuracy(&[false, true], &[true, true, true, false]).unwrap();
        assert_eq!(ba, 0.625);
        assert!(balanced_accuracy(&[], &[true]).is_err());
    }

    #[test]
    fn distance_matrix_validation() {
        let ok = Matrix::new(2, 2, vec![0.5, 0.8, 0.8, 0.5]).unwrap();
        assert!(DistanceMatrix::new(vec![0, 1], ok, MatrixUnit::BalancedAccuracy).is_ok());
        let asym = Matrix::new(2, 2, vec![0.5, 0.8, 0.7, 0.5]).unwrap();
        assert!(DistanceMatrix::new(vec![0, 1], asym, MatrixUnit::BalancedAccuracy).is_err());
        let diag = Matrix::new(2, 2, vec![0.0, 0.8, 0.8, 0.0]).unwrap();
        assert!(DistanceMatrix::new(vec![0, 1], diag, MatrixUnit::BalancedAccuracy).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            val_fraction: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
