use serde::{Deserialize, Serialize};

use super::network::Network;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Usage(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Moment accumulators mirroring the parameter tensors of a [`Network`].
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &Network, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of `params` in place.
///
/// Gradients are checked before anything is modified, so a non-finite entry
/// leaves both `params` and `state` untouched.
pub fn adam_step(params: &mut Network, grads: &Network, state: &mut AdamState) -> Result<()> {
    params.check_same_shape(grads)?;
    let grad_tensors = grads.tensors();
    if grad_tensors.len() != state.first.len()
        || grad_tensors.iter().zip(&state.first).any(|(g, m)| g.len() != m.len())
    {
        return Err(Error::Shape("optimizer state does not match parameters".into()));
    }
    for (t, g) in grad_tensors.iter().enumerate() {
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                location: format!("gradient tensor {t}, index {i}"),
            });
        }
    }

    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let correct1 = 1.0 - beta1.powi(t);
    let correct2 = 1.0 - beta2.powi(t);

    for (((p, g), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grad_tensors)
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        for i in 0..p.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / correct1;
            let v_hat = v[i] / correct2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{Activation, Dense, Matrix};

    fn scalar(theta: f64) -> Network {
        Network::new(
            vec![Dense::new(Matrix::new(1, 1, vec![theta]).unwrap(), vec![0.0]).unwrap()],
            Activation::Relu,
        )
        .unwrap()
    }

    fn scalar_grad(g: f64) -> Network {
        scalar(g)
    }

    fn theta(net: &Network) -> f64 {
        net.layers()[0].weights.get(0, 0)
    }

    #[test]
    fn zero_gradient_first_step_keeps_params() {
        let mut p = scalar(0.7);
        let mut s = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &scalar_grad(0.0), &mut s).unwrap();
        assert_eq!(theta(&p), 0.7);
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn first_step_moves_by_the_step_size() {
        for g in [3.0, -0.02, 1e4] {
            let mut p = scalar(1.0);
            let cfg = AdamConfig::default();
            let mut s = AdamState::new(&p, cfg);
            adam_step(&mut p, &scalar_grad(g), &mut s).unwrap();
            // m̂ = g and v̂ = g², so the update is lr·g/(|g|+ε).
            let expected = 1.0 - cfg.lr * g / (g.abs() + cfg.eps);
            assert!((theta(&p) - expected).abs() < 1e-15);
            assert!(((1.0 - theta(&p)).abs() - cfg.lr).abs() < 1e-8);
        }
    }

    #[test]
    fn quadratic_loss_decreases_over_two_steps() {
        // loss ½θ², gradient θ; compare with a plain scalar Adam simulation.
        let cfg = AdamConfig::default();
        let mut p = scalar(1.0);
        let mut s = AdamState::new(&p, cfg);
        let (mut th, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        let mut last_loss = 0.5;
        for t in 1..=2 {
            let g = theta(&p);
            adam_step(&mut p, &scalar_grad(g), &mut s).unwrap();
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * th;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * th * th;
            let mh = m / (1.0 - cfg.beta1.powi(t));
            let vh = v / (1.0 - cfg.beta2.powi(t));
            th -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
            assert!((theta(&p) - th).abs() < 1e-15);
            let loss = 0.5 * theta(&p).powi(2);
            assert!(loss < last_loss);
            last_loss = loss;
        }
    }

    #[test]
    fn non_finite_gradient_is_reported_and_state_untouched() {
        let mut p = scalar(1.0);
        let mut s = AdamState::new(&p, AdamConfig::default());
        let err = adam_step(&mut p, &{
            let mut g = scalar(0.0);
            g.layers_mut()[0].bias[0] = f64::INFINITY;
            g
        }, &mut s)
        .unwrap_err();
        match err {
            Error::Numeric { location } => assert!(location.contains("tensor 1, index 0")),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(s.step(), 0);
        assert_eq!(theta(&p), 1.0);
    }
}
