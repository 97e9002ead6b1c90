//! Pairwise classification scores from `k` logits and the balanced, routed loss.
//!
//! An observation `x` from cluster `i` is a class-0 example for every task in
//! row `i` (`f(x)_ij`, cluster `i` vs `j`) and a class-1 example for every task
//! in column `i` (`f(x)_ji`). All other `k² - 2(k-1)` scores are irrelevant to it.
//! Scores are never materialized as a `k × k` matrix: `f(x)_ij` is the sigmoid
//! of the logit difference `logit_j - logit_i`.
//!
//! Cluster indices are zero-based throughout.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numcore::Network;
use crate::{Error, Result};

/// Number of observations per cluster, `|S_1| .. |S_k|`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSizes(Vec<usize>);

impl ClusterSizes {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Degenerate(format!(
                "need at least 2 clusters, got {}",
                sizes.len()
            )));
        }
        if let Some(i) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Degenerate(format!("cluster {i} is empty")));
        }
        Ok(Self(sizes))
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn get(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    fn check(&self, i: usize) -> Result<()> {
        if i >= self.k() {
            Err(Error::Index { index: i, len: self.k() })
        } else {
            Ok(())
        }
    }
}

/// Binary class label of a pairwise task: 0 for the row cluster, 1 for the column cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairLabel {
    Negative,
    Positive,
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Binary cross-entropy of label `y` against `sigmoid(z)`, evaluated from the logit `z`.
///
/// Returns the loss and its derivative with respect to `z`.
#[inline]
pub fn bce_with_logit(y: PairLabel, z: f64) -> (f64, f64) {
    match y {
        PairLabel::Negative => (softplus(z), sigmoid(z)),
        PairLabel::Positive => (softplus(-z), sigmoid(z) - 1.0),
    }
}

/// `f(x)_ij = sigmoid(logit_j - logit_i)`: probability that `x` comes from cluster `j`
/// rather than cluster `i`.
pub fn pair_score(logits: &[f64], i: usize, j: usize) -> Result<f64> {
    let k = logits.len();
    for idx in [i, j] {
        if idx >= k {
            return Err(Error::Index { index: idx, len: k });
        }
    }
    Ok(sigmoid(logits[j] - logits[i]))
}

/// Read-only view of all pairwise scores of one observation.
#[derive(Debug, Clone, Copy)]
pub struct PairScoreView<'a> {
    logits: &'a [f64],
}

impl<'a> PairScoreView<'a> {
    pub fn new(logits: &'a [f64]) -> Self {
        Self { logits }
    }

    pub fn k(&self) -> usize {
        self.logits.len()
    }

    pub fn score(&self, i: usize, j: usize) -> Result<f64> {
        pair_score(self.logits, i, j)
    }

    /// Class predicted for task `(i, j)`; a tie at 0.5 predicts class 1.
    pub fn predicts_positive(&self, i: usize, j: usize) -> Result<bool> {
        Ok(self.score(i, j)? >= 0.5)
    }
}

/// Cost-sensitive weight of a label in task `(i, j)`: `1/(2 s_i)` for class 0,
/// `1/(2 s_j)` for class 1, where `s_i = |S_i| / (|S_i| + |S_j|)`.
pub fn balanced_weight(sizes: &ClusterSizes, i: usize, j: usize, y: PairLabel) -> Result<f64> {
    sizes.check(i)?;
    sizes.check(j)?;
    if i == j {
        return Err(Error::Degenerate(format!("pair ({i}, {i}) has no classification task")));
    }
    let (si, sj) = (sizes.get(i) as f64, sizes.get(j) as f64);
    let total = si + sj;
    Ok(match y {
        PairLabel::Negative => total / (2.0 * si),
        PairLabel::Positive => total / (2.0 * sj),
    })
}

/// Loss contributed by one observation from cluster `origin`, and its gradient on the logits.
///
/// Sums, over every other cluster `j`, the row term (`x` as class 0 in task
/// `(origin, j)`) and the column term (`x` as class 1 in task `(j, origin)`),
/// each scaled by `1/(|S_origin| + |S_j|)`. The `1/(k² - k)` normalization is
/// applied by [`total_loss`].
pub fn observation_loss(logits: &[f64], origin: usize, sizes: &ClusterSizes) -> Result<(f64, Vec<f64>)> {
    let k = logits.len();
    if k < 2 {
        return Err(Error::Degenerate(format!("need at least 2 logits, got {k}")));
    }
    if k != sizes.k() {
        return Err(Error::Shape(format!("{k} logits for {} clusters", sizes.k())));
    }
    sizes.check(origin)?;
    if let Some(p) = logits.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            location: format!("logit {p}"),
        });
    }

    let i = origin;
    let mut loss = 0.0;
    let mut grad = vec![0.0; k];
    for j in (0..k).filter(|&j| j != i) {
        let pair_norm = 1.0 / (sizes.get(i) + sizes.get(j)) as f64;

        // Row term: task (i, j), score f_ij = σ(l_j - l_i), label 0.
        let w_row = pair_norm * balanced_weight(sizes, i, j, PairLabel::Negative)?;
        let (l_row, d_row) = bce_with_logit(PairLabel::Negative, logits[j] - logits[i]);
        loss += w_row * l_row;
        grad[j] += w_row * d_row;
        grad[i] -= w_row * d_row;

        // Column term: task (j, i), score f_ji = σ(l_i - l_j), label 1.
        let w_col = pair_norm * balanced_weight(sizes, j, i, PairLabel::Positive)?;
        let (l_col, d_col) = bce_with_logit(PairLabel::Positive, logits[i] - logits[j]);
        loss += w_col * l_col;
        grad[i] += w_col * d_col;
        grad[j] -= w_col * d_col;
    }
    Ok((loss, grad))
}

/// One training observation: its features and the index of its cluster.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub features: &'a [f64],
    pub origin: usize,
}

/// Observations per parallel work unit. Fixed so the gradient reduction order
/// never depends on the thread count.
const CHUNK: usize = 16;

/// `L = 1/(k² - k) · Σ observation_loss` over the batch, and its parameter gradient.
///
/// `sizes` are the full training-split sizes, not batch counts, so the batch
/// loss is an unbiased estimate of the loss over the whole training split.
pub fn total_loss(net: &Network, batch: &[Sample<'_>], sizes: &ClusterSizes) -> Result<(f64, Network)> {
    if batch.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    let k = sizes.k();
    if net.output_dim() != k {
        return Err(Error::Shape(format!(
            "network has {} logits for {k} clusters",
            net.output_dim()
        )));
    }
    if let Some(s) = batch.iter().find(|s| s.origin >= k) {
        return Err(Error::Index { index: s.origin, len: k });
    }
    let norm = 1.0 / (k * k - k) as f64;

    let partials: Vec<(f64, Network)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = net.zeros_like();
            let mut loss = 0.0;
            for s in chunk {
                net.forward_backward(s.features, &mut grad, |logits| {
                    let (l, mut g) = observation_loss(logits, s.origin, sizes)?;
                    loss += l;
                    g.iter_mut().for_each(|v| *v *= norm);
                    Ok(g)
                })?;
            }
            Ok((loss, grad))
        })
        .collect::<Result<_>>()?;

    let mut iter = partials.into_iter();
    let (mut loss, mut grad) = iter.next().expect("non-empty batch");
    for (l, g) in iter {
        loss += l;
        grad.add_scaled(&g, 1.0)?;
    }
    Ok((loss * norm, grad))
}

/// Bytes needed for the output-layer weights of `k` clusters with last hidden width `h`.
///
/// Without the logit-difference trick every ordered pair needs its own output
/// unit (`k²·h` weights); with it only `k·h`.
pub fn memory_estimate(k: u64, h: u64, bytes_per_param: u64, use_trick: bool) -> u64 {
    let outputs = if use_trick { k } else { k * k };
    outputs * h * bytes_per_param
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sizes(v: &[usize]) -> ClusterSizes {
        ClusterSizes::new(v.to_vec()).unwrap()
    }

    #[test]
    fn equal_logits_score_one_half() {
        assert_eq!(pair_score(&[0.3, 0.3, -1.0], 0, 1).unwrap(), 0.5);
        assert_eq!(pair_score(&[2.0], 0, 0).unwrap(), 0.5);
    }

    #[test]
    fn score_of_ln3_difference_is_three_quarters() {
        let s = pair_score(&[0.0, 3f64.ln()], 0, 1).unwrap();
        assert!((s - 0.75).abs() < 1e-15);
    }

    #[test]
    fn score_index_out_of_range() {
        assert!(matches!(pair_score(&[0.0, 1.0], 0, 2), Err(Error::Index { index: 2, len: 2 })));
    }

    #[test]
    fn tie_predicts_positive() {
        let view = PairScoreView::new(&[1.0, 1.0]);
        assert!(view.predicts_positive(0, 1).unwrap());
        assert!(view.predicts_positive(1, 0).unwrap());
    }

    #[test]
    fn balanced_weights() {
        let eq = sizes(&[40, 40]);
        for y in [PairLabel::Negative, PairLabel::Positive] {
            assert_eq!(balanced_weight(&eq, 0, 1, y).unwrap(), 1.0);
        }
        let s = sizes(&[25, 75]);
        assert_eq!(balanced_weight(&s, 0, 1, PairLabel::Negative).unwrap(), 2.0);
        assert!((balanced_weight(&s, 0, 1, PairLabel::Positive).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            balanced_weight(&s, 1, 1, PairLabel::Negative),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn symmetric_point_loss_for_two_clusters() {
        let s = sizes(&[30, 30]);
        let (loss, grad) = observation_loss(&[0.0, 0.0], 0, &s).unwrap();
        assert!((loss - 2.0 * std::f64::consts::LN_2 / 60.0).abs() < 1e-15);
        // Pushes the origin logit up and the other down.
        assert!(grad[0] < 0.0 && grad[1] > 0.0);
    }

    #[test]
    fn saturated_correct_prediction_has_vanishing_gradient() {
        let s = sizes(&[10, 20, 30]);
        let (loss, grad) = observation_loss(&[60.0, 0.0, -3.0], 0, &s).unwrap();
        assert!(loss < 1e-24);
        assert!(grad.iter().all(|g| g.abs() < 1e-24));
    }

    #[test]
    fn observation_loss_errors() {
        assert!(matches!(
            observation_loss(&[0.0], 0, &sizes(&[1, 1])),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            observation_loss(&[0.0, f64::NAN], 0, &sizes(&[1, 1])),
            Err(Error::Numeric { .. })
        ));
        assert!(ClusterSizes::new(vec![3]).is_err());
        assert!(ClusterSizes::new(vec![3, 0]).is_err());
    }

    #[test]
    fn memory_examples() {
        assert_eq!(memory_estimate(10_000, 4096, 4, false), 1_638_400_000_000);
        assert_eq!(memory_estimate(10_000, 4096, 4, true), 163_840_000);
        assert_eq!(memory_estimate(1, 1, 4, false), 4);
    }
}
