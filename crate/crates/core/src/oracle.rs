//! Exact reference values for validating the estimator.
//!
//! TVDs use the factor-2 convention `δ(P, Q) = 2·sup_Z |P(Z) - Q(Z)|`, so
//! `δ ∈ [0, 2]` and the balanced Bayes rule reaches an expected balanced
//! accuracy of `1/2 + δ/4`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimator::balanced_accuracy;
use crate::seeds;
use crate::{Error, Result};

/// Probability vector over `0..support`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Usage("empty distribution".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Usage(format!("invalid probabilities {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Usage(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(Error::Usage("weights must have positive sum".into()));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn support(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, x: usize) -> f64 {
        self.probs[x]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

fn check_support(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<()> {
    if p.support() != q.support() {
        return Err(Error::Usage(format!(
            "support sizes differ: {} vs {}",
            p.support(),
            q.support()
        )));
    }
    Ok(())
}

/// `Σ_x |p(x) - q(x)|`, which equals `2·sup_Z |p(Z) - q(Z)|`.
pub fn tvd_discrete(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    check_support(p, q)?;
    Ok(p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum())
}

/// Gaussian with diagonal covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl GaussianSpec {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if mean.len() != variance.len() || mean.is_empty() {
            return Err(Error::Shape(format!(
                "mean of dimension {} with {} variances",
                mean.len(),
                variance.len()
            )));
        }
        if variance.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Usage(format!("variances must be positive: {variance:?}")));
        }
        Ok(Self { mean, variance })
    }

    pub fn univariate(mean: f64, variance: f64) -> Result<Self> {
        Self::new(vec![mean], vec![variance])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std_dev(&self) -> Vec<f64> {
        self.variance.iter().map(|v| v.sqrt()).collect()
    }

    fn density_1d(&self, x: f64) -> f64 {
        let (m, v) = (self.mean[0], self.variance[0]);
        (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
    }
}

/// `∫ |a(x) - b(x)| dx` for univariate Gaussians by composite Simpson quadrature.
///
/// The grid spans `±8σ` around both means and has `resolution` intervals
/// (rounded up to an even count).
pub fn tvd_gaussian_1d(a: &GaussianSpec, b: &GaussianSpec, resolution: usize) -> Result<f64> {
    if a.dim() != 1 || b.dim() != 1 {
        return Err(Error::Usage("tvd_gaussian_1d needs univariate specs".into()));
    }
    let (sa, sb) = (a.variance[0].sqrt(), b.variance[0].sqrt());
    let lo = (a.mean[0] - 8.0 * sa).min(b.mean[0] - 8.0 * sb);
    let hi = (a.mean[0] + 8.0 * sa).max(b.mean[0] + 8.0 * sb);
    let n = (resolution.max(2) + 1) & !1;
    let h = (hi - lo) / n as f64;
    let f = |x: f64| (a.density_1d(x) - b.density_1d(x)).abs();
    let mut sum = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(lo + i as f64 * h);
    }
    Ok((sum * h / 3.0).clamp(0.0, 2.0))
}

/// Balanced Bayes rule: class 1 iff `q(x) >= p(x)`.
pub fn bayes_predict(p: &DiscreteDistribution, q: &DiscreteDistribution, x: usize) -> bool {
    q.prob(x) >= p.prob(x)
}

/// Expected balanced accuracy of the balanced Bayes rule, `1/2 + δ/4`.
pub fn expected_bayes_ba(tvd: f64) -> Result<f64> {
    if !(0.0..=2.0).contains(&tvd) {
        return Err(Error::Usage(format!("TVD {tvd} outside [0, 2]")));
    }
    Ok(0.5 + 0.25 * tvd)
}

/// Inverse of [`expected_bayes_ba`]: `4·(ba - 1/2)`, clamped to `[0, 2]`.
pub fn ba_to_tvd(ba: f64) -> f64 {
    (4.0 * (ba - 0.5)).clamp(0.0, 2.0)
}

/// Mean and standard error of a Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub mean: f64,
    pub std_error: f64,
}

impl MonteCarlo {
    /// `|mean - target| <= sigmas · std_error`, with a rounding allowance.
    pub fn agrees_with(&self, target: f64, sigmas: f64) -> bool {
        (self.mean - target).abs() <= sigmas * self.std_error + 1e-12
    }
}

/// Balanced accuracy of the Bayes rule on `trials` independent draws of
/// `m` samples from `p` (class 0) and `n` samples from `q` (class 1).
pub fn monte_carlo_bayes_ba(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    m: usize,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<MonteCarlo> {
    check_support(p, q)?;
    if m == 0 || n == 0 || trials == 0 {
        return Err(Error::Usage("m, n and trials must be positive".into()));
    }
    let dp = WeightedIndex::new(p.probs()).map_err(|e| Error::Usage(e.to_string()))?;
    let dq = WeightedIndex::new(q.probs()).map_err(|e| Error::Usage(e.to_string()))?;
    let bas: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeds::rng_indexed(seed, "monte-carlo", t as u64);
            let class0: Vec<bool> = (0..m).map(|_| bayes_predict(p, q, dp.sample(&mut rng))).collect();
            let class1: Vec<bool> = (0..n).map(|_| bayes_predict(p, q, dq.sample(&mut rng))).collect();
            balanced_accuracy(&class0, &class1)
        })
        .collect::<Result<_>>()?;
    let count = bas.len() as f64;
    let mean = bas.iter().sum::<f64>() / count;
    let var = if bas.len() > 1 {
        bas.iter().map(|b| (b - mean) * (b - mean)).sum::<f64>() / (count - 1.0)
    } else {
        0.0
    };
    Ok(MonteCarlo {
        mean,
        std_error: (var / count).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(p: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn tvd_examples() {
        let p = dist(&[0.8, 0.2]);
        let q = dist(&[0.2, 0.8]);
        assert_eq!(tvd_discrete(&p, &p).unwrap(), 0.0);
        assert_eq!(tvd_discrete(&dist(&[1.0, 0.0]), &dist(&[0.0, 1.0])).unwrap(), 2.0);
        assert!((tvd_discrete(&p, &q).unwrap() - 1.2).abs() < 1e-15);
        assert!(tvd_discrete(&p, &dist(&[1.0])).is_err());
    }

    #[test]
    fn distribution_validation() {
        assert!(DiscreteDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(DiscreteDistribution::new(vec![-0.1, 1.1]).is_err());
        assert!(DiscreteDistribution::new(vec![]).is_err());
    }

    #[test]
    fn gaussian_quadrature_limits() {
        let a = GaussianSpec::univariate(0.0, 1.0).unwrap();
        assert!(tvd_gaussian_1d(&a, &a, 2000).unwrap() < 1e-10);
        let far = GaussianSpec::univariate(20.0, 1.0).unwrap();
        assert!((tvd_gaussian_1d(&a, &far, 20000).unwrap() - 2.0).abs() < 1e-6);
        assert!(tvd_gaussian_1d(&GaussianSpec::new(vec![0.0; 2], vec![1.0; 2]).unwrap(), &a, 10).is_err());
    }

    #[test]
    fn bayes_rule_examples() {
        let p = dist(&[0.8, 0.2]);
        let q = dist(&[0.2, 0.8]);
        assert!(bayes_predict(&p, &p, 0));
        assert!(!bayes_predict(&p, &q, 0));
        assert!(bayes_predict(&dist(&[1.0, 0.0]), &dist(&[0.0, 1.0]), 1));
    }

    #[test]
    fn expected_ba_examples() {
        assert_eq!(expected_bayes_ba(0.0).unwrap(), 0.5);
        assert_eq!(expected_bayes_ba(2.0).unwrap(), 1.0);
        assert!((expected_bayes_ba(1.2).unwrap() - 0.8).abs() < 1e-15);
        assert!(expected_bayes_ba(2.1).is_err());
        assert!(expected_bayes_ba(-0.1).is_err());
        assert!((ba_to_tvd(0.8) - 1.2).abs() < 1e-12);
        assert_eq!(ba_to_tvd(0.4), 0.0);
    }

    #[test]
    fn monte_carlo_edge_cases() {
        let p = dist(&[0.3, 0.7]);
        let same = monte_carlo_bayes_ba(&p, &p, 17, 40, 50, 1).unwrap();
        assert_eq!(same.mean, 0.5);
        assert_eq!(same.std_error, 0.0);

        let dis = monte_carlo_bayes_ba(&dist(&[1.0, 0.0]), &dist(&[0.0, 1.0]), 5, 9, 30, 2).unwrap();
        assert_eq!(dis.mean, 1.0);
        assert_eq!(dis.std_error, 0.0);
    }

    #[test]
    fn monte_carlo_unequal_sizes() {
        let p = dist(&[0.8, 0.2]);
        let q = dist(&[0.2, 0.8]);
        let mc = monte_carlo_bayes_ba(&p, &q, 100, 300, 1000, 7).unwrap();
        let target = expected_bayes_ba(tvd_discrete(&p, &q).unwrap()).unwrap();
        assert!(mc.agrees_with(target, 3.0), "{mc:?} vs {target}");
    }
}
