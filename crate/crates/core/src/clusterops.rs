//! Creating, corrupting and merging clusterings.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label};
use crate::estimator::{estimate, DistanceMatrix, MatrixUnit, TrainConfig};
use crate::seeds;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: usize,
    pub members: Vec<usize>,
}

/// Disjoint, non-empty clusters of observation ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    clusters: Vec<Cluster>,
    /// observation id -> position in `clusters`
    owner: BTreeMap<usize, usize>,
}

impl Clustering {
    pub fn new(clusters: Vec<Cluster>) -> Result<Self> {
        let mut owner = BTreeMap::new();
        let mut ids = BTreeSet::new();
        for (pos, c) in clusters.iter().enumerate() {
            if c.members.is_empty() {
                return Err(Error::Consistency(format!("cluster {} is empty", c.id)));
            }
            if !ids.insert(c.id) {
                return Err(Error::Consistency(format!("duplicate cluster id {}", c.id)));
            }
            for &m in &c.members {
                if let Some(prev) = owner.insert(m, pos) {
                    return Err(Error::Consistency(format!(
                        "observation {m} is in clusters {} and {}",
                        clusters[prev].id, c.id
                    )));
                }
            }
        }
        Ok(Self { clusters, owner })
    }

    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn into_clusters(self) -> Vec<Cluster> {
        self.clusters
    }

    /// Total number of assigned observations.
    pub fn len(&self) -> usize {
        self.owner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owner.is_empty()
    }

    /// Position of the cluster holding observation `id`.
    pub fn cluster_of(&self, id: usize) -> Option<usize> {
        self.owner.get(&id).copied()
    }

    pub fn position_of(&self, cluster_id: usize) -> Option<usize> {
        self.clusters.iter().position(|c| c.id == cluster_id)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.members.len()).collect()
    }

    pub fn cluster_ids(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.id).collect()
    }

    /// Every member must be an observation of `dataset`.
    pub fn check_against(&self, dataset: &Dataset) -> Result<()> {
        for c in &self.clusters {
            if let Some(m) = c.members.iter().find(|&&m| !dataset.contains(m)) {
                return Err(Error::Consistency(format!(
                    "cluster {} references unknown observation {m}",
                    c.id
                )));
            }
        }
        Ok(())
    }

    /// Clusters rearranged so that position `p` holds the cluster previously at `order[p]`.
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.k()];
        if order.len() != self.k()
            || order
                .iter()
                .any(|&o| o >= self.k() || std::mem::replace(&mut seen[o], true))
        {
            return Err(Error::Usage(format!("{order:?} is not a permutation of the clusters")));
        }
        Self::new(order.iter().map(|&o| self.clusters[o].clone()).collect())
    }
}

/// Most frequent label among `members`; ties go to the smallest label.
pub fn majority_category(members: &[usize], dataset: &Dataset) -> Result<Label> {
    if members.is_empty() {
        return Err(Error::Usage("majority of an empty cluster".into()));
    }
    let mut counts: BTreeMap<Label, usize> = BTreeMap::new();
    for &m in members {
        *counts.entry(dataset.require_label(m)?).or_default() += 1;
    }
    Ok(majority_of_counts(&counts).0)
}

/// `(label, count)` with the highest count, smallest label among ties.
fn majority_of_counts(counts: &BTreeMap<Label, usize>) -> (Label, usize) {
    let mut best = (Label::MAX, 0);
    for (&label, &count) in counts {
        if count > best.1 {
            best = (label, count);
        }
    }
    best
}

/// Majority category of every cluster, in cluster order.
pub fn majorities(clustering: &Clustering, dataset: &Dataset) -> Result<Vec<Label>> {
    clustering
        .clusters()
        .iter()
        .map(|c| majority_category(&c.members, dataset))
        .collect()
}

/// Number of members agreeing with their cluster's majority.
pub(crate) fn majority_count(members: &[usize], dataset: &Dataset) -> Result<usize> {
    let mut counts: BTreeMap<Label, usize> = BTreeMap::new();
    for &m in members {
        *counts.entry(dataset.require_label(m)?).or_default() += 1;
    }
    Ok(majority_of_counts(&counts).1)
}

/// Splits every category into clusters of exactly `s` observations.
///
/// Each category is shuffled and cut into consecutive runs of `s`; the final
/// `< s` leftovers are discarded so that all clusters share the same size.
pub fn artificial_overcluster(dataset: &Dataset, s: usize, seed: u64) -> Result<Clustering> {
    if s == 0 {
        return Err(Error::Usage("cluster size s must be positive".into()));
    }
    let mut by_label: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for &id in dataset.ids() {
        by_label.entry(dataset.require_label(id)?).or_default().push(id);
    }
    if by_label.is_empty() {
        return Err(Error::Usage("dataset is empty".into()));
    }
    if let Some((label, ids)) = by_label.iter().find(|(_, ids)| ids.len() < s) {
        return Err(Error::Usage(format!(
            "category {label} has {} observations, fewer than s = {s}",
            ids.len()
        )));
    }
    let mut rng = seeds::rng(seed, seeds::OVERCLUSTER);
    let mut clusters = Vec::new();
    for (_, mut ids) in by_label {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        for chunk in ids.chunks_exact(s) {
            let mut members = chunk.to_vec();
            members.sort_unstable();
            clusters.push(Cluster {
                id: clusters.len(),
                members,
            });
        }
    }
    Clustering::new(clusters)
}

/// Moves `floor(pi·N)` randomly chosen observations to random clusters of a different category.
///
/// Target eligibility uses the majority categories of the input clustering,
/// frozen for the whole pass. Clusters emptied by the moves are dropped.
pub fn inject_noise(clustering: &Clustering, dataset: &Dataset, pi: f64, seed: u64) -> Result<Clustering> {
    if !(0.0..1.0).contains(&pi) {
        return Err(Error::Usage(format!("noise ratio {pi} is not in [0, 1)")));
    }
    let frozen = majorities(clustering, dataset)?;
    if frozen.iter().collect::<BTreeSet<_>>().len() < 2 {
        return Err(Error::Usage(
            "noise injection needs at least 2 distinct majority categories".into(),
        ));
    }
    let flat: Vec<(usize, usize)> = clustering
        .clusters()
        .iter()
        .enumerate()
        .flat_map(|(p, c)| c.members.iter().map(move |&m| (p, m)))
        .collect();
    let n_moves = (pi * flat.len() as f64 + 1e-9).floor() as usize;
    if n_moves == 0 {
        return Ok(clustering.clone());
    }

    let mut rng = seeds::rng(seed, seeds::NOISE);
    let chosen = rand::seq::index::sample(&mut rng, flat.len(), n_moves);
    let mut target_of: BTreeMap<usize, usize> = BTreeMap::new();
    for idx in chosen.iter() {
        let (from, obs) = flat[idx];
        let label = dataset.require_label(obs)?;
        let eligible: Vec<usize> = (0..frozen.len())
            .filter(|&p| p != from && frozen[p] != label)
            .collect();
        let &to = eligible.choose(&mut rng).ok_or_else(|| {
            Error::Usage(format!("no cluster with a category other than {label} for observation {obs}"))
        })?;
        target_of.insert(obs, to);
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); clustering.k()];
    for &(p, m) in &flat {
        members[*target_of.get(&m).unwrap_or(&p)].push(m);
    }
    let clusters = clustering
        .clusters()
        .iter()
        .zip(members)
        .filter(|(_, m)| !m.is_empty())
        .map(|(c, mut m)| {
            m.sort_unstable();
            Cluster { id: c.id, members: m }
        })
        .collect();
    Clustering::new(clusters)
}

#[inline]
pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// A candidate cluster of the greedy over-clustering: a seed and its nearest neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub seed: usize,
    /// Row indices of the `s - 1` nearest unassigned neighbors, nearest first.
    pub neighbors: Vec<usize>,
    /// Mean seed-to-neighbor distance; smaller is denser.
    pub avg_distance: f64,
}

/// Candidate around `seed` among the rows flagged in `free`.
///
/// Neighbors are ordered by `(distance, row)`, so ties resolve to lower rows.
pub fn greedy_candidate(rows: &[&[f64]], free: &[bool], seed: usize, s: usize) -> Candidate {
    let mut dists: Vec<(f64, usize)> = (0..rows.len())
        .filter(|&r| r != seed && free[r])
        .map(|r| (euclidean(rows[seed], rows[r]), r))
        .collect();
    let need = s - 1;
    let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if need < dists.len() {
        dists.select_nth_unstable_by(need, by_distance);
        dists.truncate(need);
    }
    dists.sort_unstable_by(by_distance);
    let avg_distance = dists.iter().map(|d| d.0).sum::<f64>() / need as f64;
    Candidate {
        seed,
        neighbors: dists.into_iter().map(|d| d.1).collect(),
        avg_distance,
    }
}

/// Greedy dense over-clustering: `k` disjoint clusters of exactly `s` observations.
///
/// Every round builds, for each unassigned observation, the candidate made of
/// it and its `s - 1` nearest unassigned neighbors, then keeps the candidate
/// with the smallest average seed-to-neighbor distance (ties: lowest seed row)
/// and marks its members as assigned. Cluster ids follow selection order.
pub fn greedy_overcluster(dataset: &Dataset, s: usize, k: usize) -> Result<Clustering> {
    if s < 2 {
        return Err(Error::Usage(format!("cluster size s = {s} must be at least 2")));
    }
    if k == 0 {
        return Err(Error::Usage("number of clusters k must be positive".into()));
    }
    let n = dataset.len();
    if n < k * s {
        return Err(Error::Usage(format!(
            "{n} observations cannot fill {k} clusters of {s}"
        )));
    }
    let rows: Vec<&[f64]> = (0..n).map(|r| dataset.features().row(r)).collect();
    let mut free = vec![true; n];
    let mut clusters = Vec::with_capacity(k);
    for id in 0..k {
        let best = (0..n)
            .into_par_iter()
            .filter(|&r| free[r])
            .map(|r| greedy_candidate(&rows, &free, r, s))
            .min_by(|a, b| a.avg_distance.total_cmp(&b.avg_distance).then(a.seed.cmp(&b.seed)))
            .expect("n >= k·s leaves free rows");
        let mut members: Vec<usize> = std::iter::once(best.seed)
            .chain(best.neighbors.iter().copied())
            .collect();
        for &r in &members {
            free[r] = false;
        }
        members.iter_mut().for_each(|r| *r = dataset.ids()[*r]);
        members.sort_unstable();
        clusters.push(Cluster { id, members });
    }
    Clustering::new(clusters)
}

/// Mean Euclidean distance over all cross-cluster pairs of observations.
pub fn euclidean_baseline(dataset: &Dataset, clustering: &Clustering) -> Result<DistanceMatrix> {
    clustering.check_against(dataset)?;
    let rows: Vec<Vec<&[f64]>> = clustering
        .clusters()
        .iter()
        .map(|c| c.members.iter().map(|&m| dataset.features_of(m)).collect())
        .collect::<Result<_>>()?;
    let k = clustering.k();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    let means: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let total: f64 = rows[i]
                .iter()
                .map(|a| rows[j].iter().map(|b| euclidean(a, b)).sum::<f64>())
                .sum();
            total / (rows[i].len() * rows[j].len()) as f64
        })
        .collect();
    let mut next = means.into_iter();
    DistanceMatrix::from_upper(clustering.cluster_ids(), MatrixUnit::Euclidean, |_, _| {
        Ok(next.next().expect("one mean per pair"))
    })
}

/// Source of cluster distances for [`hierarchical_merge`].
pub trait DistanceBackend {
    /// Distances for the current clustering before merge number `step` (1-based).
    fn distances(&mut self, dataset: &Dataset, clustering: &Clustering, step: usize) -> Result<DistanceMatrix>;
}

/// Average Euclidean distance between clusters' feature vectors.
#[derive(Debug, Clone, Copy, Default)]
pub struct EuclideanBackend;

impl DistanceBackend for EuclideanBackend {
    fn distances(&mut self, dataset: &Dataset, clustering: &Clustering, _step: usize) -> Result<DistanceMatrix> {
        euclidean_baseline(dataset, clustering)
    }
}

/// Holdout balanced accuracies of a freshly trained pairwise network.
///
/// A new network is trained from scratch before every merge, with a seed
/// derived from the configured one and the step number.
#[derive(Debug, Clone)]
pub struct TvdBackend {
    pub config: TrainConfig,
}

impl DistanceBackend for TvdBackend {
    fn distances(&mut self, dataset: &Dataset, clustering: &Clustering, step: usize) -> Result<DistanceMatrix> {
        let config = TrainConfig {
            seed: seeds::derive_indexed(self.config.seed, seeds::MERGE, step as u64),
            ..self.config.clone()
        };
        Ok(estimate(dataset, clustering, &config)?.matrix)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub step: usize,
    /// Id of the surviving cluster.
    pub a: usize,
    /// Id of the cluster absorbed into `a`.
    pub b: usize,
    pub distance: f64,
    pub majority_a: Option<Label>,
    pub majority_b: Option<Label>,
    /// Whether both clusters had the same majority category; absent without labels.
    pub correct: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MergeTrace {
    pub steps: Vec<MergeStep>,
}

impl MergeTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Off-diagonal minimum `(i, j)`, `i < j`; ties go to the lexicographically smallest pair.
pub fn closest_pair(matrix: &DistanceMatrix) -> Option<(usize, usize)> {
    let k = matrix.k();
    let mut best: Option<(usize, usize)> = None;
    for i in 0..k {
        for j in i + 1..k {
            if best.is_none_or(|(bi, bj)| matrix.get(i, j) < matrix.get(bi, bj)) {
                best = Some((i, j));
            }
        }
    }
    best
}

/// Agglomerative merging: `steps` times, recompute distances with `backend`
/// and join the closest pair of clusters.
pub fn hierarchical_merge(
    dataset: &Dataset,
    clustering: &Clustering,
    backend: &mut dyn DistanceBackend,
    steps: usize,
) -> Result<(MergeTrace, Clustering)> {
    let k = clustering.k();
    if steps > k.saturating_sub(1) {
        return Err(Error::Usage(format!(
            "{steps} merges requested but {k} clusters allow at most {}",
            k.saturating_sub(1)
        )));
    }
    clustering.check_against(dataset)?;
    let labeled = clustering
        .clusters()
        .iter()
        .all(|c| c.members.iter().all(|&m| matches!(dataset.label_of(m), Ok(Some(_)))));

    let mut current = clustering.clone();
    let mut trace = MergeTrace::default();
    for step in 1..=steps {
        let matrix = backend.distances(dataset, &current, step)?;
        if matrix.cluster_ids() != current.cluster_ids().as_slice() {
            return Err(Error::Consistency("backend returned clusters in a different order".into()));
        }
        let (i, j) = closest_pair(&matrix).expect("at least two clusters remain");
        let mut clusters = current.into_clusters();
        let (maj_a, maj_b) = if labeled {
            (
                Some(majority_category(&clusters[i].members, dataset)?),
                Some(majority_category(&clusters[j].members, dataset)?),
            )
        } else {
            (None, None)
        };
        trace.steps.push(MergeStep {
            step,
            a: clusters[i].id,
            b: clusters[j].id,
            distance: matrix.get(i, j),
            majority_a: maj_a,
            majority_b: maj_b,
            correct: maj_a.zip(maj_b).map(|(x, y)| x == y),
        });
        let absorbed = clusters.remove(j);
        clusters[i].members.extend(absorbed.members);
        clusters[i].members.sort_unstable();
        current = Clustering::new(clusters)?;
    }
    Ok((trace, current))
}

/// `CM(upto)`: correct merges among the first `upto` steps.
pub fn correct_merges(trace: &MergeTrace, upto: usize) -> Result<usize> {
    if upto > trace.len() {
        return Err(Error::Usage(format!(
            "trace has {} merges, cannot count the first {upto}",
            trace.len()
        )));
    }
    Ok(trace.steps[..upto]
        .iter()
        .filter(|s| s.correct == Some(true))
        .count())
}
