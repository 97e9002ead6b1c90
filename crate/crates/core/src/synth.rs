//! Synthetic Gaussian-mixture datasets with one component per category.

use rand_distr::{Distribution, Normal};

use crate::dataset::{Dataset, Label};
use crate::numcore::Matrix;
use crate::oracle::GaussianSpec;
use crate::seeds;
use crate::{Error, Result};

/// One mixture component and how many observations to draw from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub label: Label,
    pub spec: GaussianSpec,
    pub count: usize,
}

/// Category means at pairwise distance `separation`.
///
/// With at most `dim` categories (and `dim > 1`) the means sit on the scaled
/// coordinate axes, `separation/√2 · e_c`, so every pair is exactly
/// `separation` apart. Otherwise they are spaced `separation` apart along the
/// first axis.
pub fn category_means(categories: usize, dim: usize, separation: f64) -> Vec<Vec<f64>> {
    (0..categories)
        .map(|c| {
            let mut m = vec![0.0; dim];
            if dim > 1 && categories <= dim {
                m[c] = separation / std::f64::consts::SQRT_2;
            } else {
                m[0] = c as f64 * separation;
            }
            m
        })
        .collect()
}

/// Unit-variance components at pairwise mean distance `separation`.
pub fn isotropic_components(categories: usize, per_category: usize, dim: usize, separation: f64) -> Result<Vec<Component>> {
    if categories == 0 || per_category == 0 || dim == 0 {
        return Err(Error::Usage("categories, count and dimension must be positive".into()));
    }
    if !(separation.is_finite() && separation >= 0.0) {
        return Err(Error::Usage(format!("separation {separation} must be non-negative")));
    }
    category_means(categories, dim, separation)
        .into_iter()
        .enumerate()
        .map(|(c, mean)| {
            Ok(Component {
                label: c as Label,
                spec: GaussianSpec::new(mean, vec![1.0; dim])?,
                count: per_category,
            })
        })
        .collect()
}

/// Draws every component's observations, component by component; ids are row numbers.
pub fn sample(components: &[Component], seed: u64) -> Result<Dataset> {
    let dim = components
        .first()
        .map(|c| c.spec.dim())
        .ok_or_else(|| Error::Usage("no mixture components".into()))?;
    if components.iter().any(|c| c.spec.dim() != dim) {
        return Err(Error::Shape("components differ in dimension".into()));
    }
    let mut rng = seeds::rng(seed, seeds::SYNTH);
    let standard = Normal::new(0.0, 1.0).expect("unit normal");
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for c in components {
        let sd = c.spec.std_dev();
        for _ in 0..c.count {
            for (m, s) in c.spec.mean.iter().zip(&sd) {
                values.push(m + s * standard.sample(&mut rng));
            }
            labels.push(Some(c.label));
        }
    }
    let n = labels.len();
    Dataset::new((0..n).collect(), Matrix::new(n, dim, values)?, labels)
}
