//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use tvdmerge::dataset::Dataset;
use tvdmerge::numcore::Network;
use tvdmerge::pairloss::{ClusterSizes, Sample};
use tvdmerge::{seeds, DistanceMatrix};

pub fn sigmoid_naive(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Full `k×k` score matrix `F[i][j] = σ(l_j - l_i)` with `F[i][i] = 1/2`.
pub fn score_matrix(logits: &[f64]) -> Vec<Vec<f64>> {
    let k = logits.len();
    (0..k)
        .map(|i| {
            (0..k)
                .map(|j| if i == j { 0.5 } else { sigmoid_naive(logits[j] - logits[i]) })
                .collect()
        })
        .collect()
}

/// Pair-major loss over a batch with every score matrix materialized.
///
/// For every task `(i, j)`, `i ≠ j`, members of cluster `i` are class 0 with
/// weight `(n_i + n_j)/(2 n_i)` and members of `j` are class 1 with weight
/// `(n_i + n_j)/(2 n_j)`; the task is scaled by `1/(n_i + n_j)` and the total
/// by `1/(k² - k)`. Returns the loss, the parameter gradient, and the score
/// gradients `dL/dF` for each sample.
pub fn naive_total_loss(net: &Network, batch: &[Sample<'_>], sizes: &ClusterSizes) -> (f64, Network, Vec<Vec<Vec<f64>>>) {
    let k = sizes.k();
    let norm = 1.0 / (k * k - k) as f64;
    let scores: Vec<Vec<Vec<f64>>> = batch
        .iter()
        .map(|s| score_matrix(&net.forward(s.features).unwrap()))
        .collect();
    let mut dscore: Vec<Vec<Vec<f64>>> = vec![vec![vec![0.0; k]; k]; batch.len()];
    let mut loss = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let (ni, nj) = (sizes.get(i) as f64, sizes.get(j) as f64);
            let task = norm / (ni + nj);
            let w0 = (ni + nj) / (2.0 * ni);
            let w1 = (ni + nj) / (2.0 * nj);
            for (b, s) in batch.iter().enumerate() {
                let f = scores[b][i][j];
                if s.origin == i {
                    loss += task * w0 * -(1.0 - f).ln();
                    dscore[b][i][j] += task * w0 / (1.0 - f);
                } else if s.origin == j {
                    loss += task * w1 * -f.ln();
                    dscore[b][i][j] -= task * w1 / f;
                }
            }
        }
    }
    let mut grad = net.zeros_like();
    for (b, s) in batch.iter().enumerate() {
        let mut upstream = vec![0.0; k];
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    continue;
                }
                let f = scores[b][i][j];
                let d = dscore[b][i][j] * f * (1.0 - f);
                upstream[j] += d;
                upstream[i] -= d;
            }
        }
        let g = net.backward(s.features, &upstream).unwrap();
        grad.add_scaled(&g, 1.0).unwrap();
    }
    (loss, grad, dscore)
}

/// All parameters flattened in tensor order.
pub fn flat(net: &Network) -> Vec<f64> {
    net.tensors().into_iter().flatten().copied().collect()
}

/// Central finite differences of `f` with respect to every parameter of `net`.
pub fn finite_difference<F>(net: &Network, h: f64, f: F) -> Vec<f64>
where
    F: Fn(&Network) -> f64,
{
    let n = net.num_params();
    let mut out = Vec::with_capacity(n);
    for p in 0..n {
        let shifted = |delta: f64| {
            let mut probe = net.clone();
            let mut seen = 0;
            for t in probe.tensors_mut() {
                if p < seen + t.len() {
                    t[p - seen] += delta;
                    break;
                }
                seen += t.len();
            }
            f(&probe)
        };
        out.push((shifted(h) - shifted(-h)) / (2.0 * h));
    }
    out
}

/// `‖a - b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Seeded network with random biases, so no pre-activation sits exactly on a ReLU kink.
pub fn random_net(dims: &[usize], seed: u64) -> Network {
    let mut rng = seeds::rng(seed, "test-net");
    let mut net = Network::init(dims, &mut rng).unwrap();
    for layer in net.layers_mut() {
        layer.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
    }
    net
}

pub fn random_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seeds::rng(seed, "test-rows");
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect()
}

/// Round-by-round greedy clustering by exhaustive candidate enumeration.
///
/// Returns clusters as sorted row lists in selection order.
pub fn brute_force_greedy(rows: &[Vec<f64>], s: usize, k: usize) -> Vec<Vec<usize>> {
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let n = rows.len();
    let mut free = vec![true; n];
    let mut out = Vec::new();
    for _ in 0..k {
        let mut best: Option<(f64, usize, Vec<usize>)> = None;
        for seed in 0..n {
            if !free[seed] {
                continue;
            }
            let mut others: Vec<(f64, usize)> = (0..n)
                .filter(|&r| r != seed && free[r])
                .map(|r| (dist(&rows[seed], &rows[r]), r))
                .collect();
            others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            others.truncate(s - 1);
            let avg = others.iter().map(|o| o.0).sum::<f64>() / (s - 1) as f64;
            let better = match &best {
                None => true,
                Some((b, _, _)) => avg < *b,
            };
            if better {
                best = Some((avg, seed, others.iter().map(|o| o.1).collect()));
            }
        }
        let (_, seed, neighbors) = best.unwrap();
        let mut members = vec![seed];
        members.extend(neighbors);
        for &m in &members {
            free[m] = false;
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// Exhaustive pair-counting estimate of `P(D_same < D_diff)`, ties counted one half.
pub fn brute_force_quality(matrix: &DistanceMatrix, majority: &[u32]) -> Option<f64> {
    let k = matrix.k();
    let mut same = Vec::new();
    let mut diff = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            if majority[i] == majority[j] {
                same.push(matrix.get(i, j));
            } else {
                diff.push(matrix.get(i, j));
            }
        }
    }
    if same.is_empty() || diff.is_empty() {
        return None;
    }
    let mut count = 0.0;
    for s in &same {
        for d in &diff {
            if s < d {
                count += 1.0;
            } else if s == d {
                count += 0.5;
            }
        }
    }
    Some(count / (same.len() * diff.len()) as f64)
}

/// Direct mean of the strict upper triangle.
pub fn upper_mean(matrix: &DistanceMatrix) -> f64 {
    let k = matrix.k();
    let mut values = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            values.push(matrix.get(i, j));
        }
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// A balanced-accuracy matrix with random entries drawn from a small grid, so ties occur.
pub fn random_ba_matrix(k: usize, seed: u64) -> DistanceMatrix {
    let mut rng = seeds::rng(seed, "test-matrix");
    DistanceMatrix::from_upper((0..k).collect(), tvdmerge::estimator::MatrixUnit::BalancedAccuracy, |_, _| {
        Ok(rng.random_range(0..=20) as f64 / 20.0)
    })
    .unwrap()
}

/// Labeled dataset from explicit rows.
pub fn labeled(rows: &[Vec<f64>], labels: &[u32]) -> Dataset {
    Dataset::from_rows(rows, labels.iter().map(|&l| Some(l)).collect()).unwrap()
}
