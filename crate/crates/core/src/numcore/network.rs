use rand::distr::{Distribution, Uniform};
use rand::Rng;

use super::matrix::Matrix;
use crate::{Error, Result};

/// Hidden-layer nonlinearity. The output layer is always affine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Affine layer `z = W a + b`, with `W` of shape `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weights.rows() != bias.len() {
            return Err(Error::Shape(format!(
                "bias of length {} for a layer with {} outputs",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weights: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    #[inline]
    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }
}

/// Feed-forward network producing pre-activation logits.
///
/// Also used as the container for parameter gradients, which share its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Dense>,
    activation: Activation,
}

/// Intermediate values of one forward pass, kept for backpropagation.
struct Trace {
    /// Input to every layer; `inputs[0]` is the observation.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of the hidden layers.
    hidden_pre: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

impl Network {
    pub fn new(layers: Vec<Dense>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Shape(format!(
                    "layer {l} outputs {} values but layer {} expects {}",
                    pair[0].output_dim(),
                    l + 1,
                    pair[1].input_dim()
                )));
            }
        }
        Ok(Self { layers, activation })
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    ///
    /// `dims` lists every width from the input to the logits, e.g. `[d, 128, 64, k]`.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Shape(format!("invalid layer widths {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
                let values = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
                Dense {
                    weights: Matrix::new(fan_out, fan_in, values).expect("sized above"),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Self::new(layers, Activation::Relu)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.input_dim(), l.output_dim()))
                .collect(),
            activation: self.activation,
        }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Parameter tensors in a fixed order: weights then bias, layer by layer.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    /// `self += scale * other`, elementwise over all parameters.
    pub fn add_scaled(&mut self, other: &Network, scale: f64) -> Result<()> {
        self.check_same_shape(other)?;
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
        Ok(())
    }

    pub fn check_same_shape(&self, other: &Network) -> Result<()> {
        let same = self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.input_dim() == b.input_dim() && a.output_dim() == b.output_dim()
            });
        if same {
            Ok(())
        } else {
            Err(Error::Shape("parameter shapes differ".into()))
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "observation has {} features, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Pre-activation logits for one observation.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut a = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = layer.weights.matvec(&a)?;
            for (zi, bi) in z.iter_mut().zip(&layer.bias) {
                *zi += bi;
            }
            if l < last {
                z.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            a = z;
        }
        Ok(a)
    }

    fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut hidden_pre = Vec::with_capacity(last);
        let mut a = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = layer.weights.matvec(&a)?;
            for (zi, bi) in z.iter_mut().zip(&layer.bias) {
                *zi += bi;
            }
            inputs.push(a);
            if l < last {
                a = z.iter().map(|&v| self.activation.apply(v)).collect();
                hidden_pre.push(z);
            } else {
                a = z;
            }
        }
        Ok(Trace {
            inputs,
            hidden_pre,
            logits: a,
        })
    }

    /// Gradient of `⟨upstream, logits(x)⟩` with respect to every parameter.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<Network> {
        let mut grad = self.zeros_like();
        self.accumulate_gradient(x, upstream, &mut grad)?;
        Ok(grad)
    }

    /// Adds the gradient of `⟨upstream, logits(x)⟩` into `grad`.
    pub fn accumulate_gradient(&self, x: &[f64], upstream: &[f64], grad: &mut Network) -> Result<()> {
        self.check_same_shape(grad)?;
        if upstream.len() != self.output_dim() {
            return Err(Error::Shape(format!(
                "upstream gradient has length {}, network has {} outputs",
                upstream.len(),
                self.output_dim()
            )));
        }
        let trace = self.forward_trace(x)?;
        self.backpropagate(&trace, upstream.to_vec(), grad)
    }

    /// Logits of `x` together with a gradient accumulated from a closure over them.
    ///
    /// `upstream_of` maps the logits to the upstream gradient; both forward and
    /// backward share a single trace.
    pub fn forward_backward<F>(&self, x: &[f64], grad: &mut Network, upstream_of: F) -> Result<Vec<f64>>
    where
        F: FnOnce(&[f64]) -> Result<Vec<f64>>,
    {
        self.check_same_shape(grad)?;
        let trace = self.forward_trace(x)?;
        let upstream = upstream_of(&trace.logits)?;
        if upstream.len() != self.output_dim() {
            return Err(Error::Shape("upstream gradient length".into()));
        }
        let logits = trace.logits.clone();
        self.backpropagate(&trace, upstream, grad)?;
        Ok(logits)
    }

    fn backpropagate(&self, trace: &Trace, mut delta: Vec<f64>, grad: &mut Network) -> Result<()> {
        for l in (0..self.layers.len()).rev() {
            let input = &trace.inputs[l];
            let g = &mut grad.layers[l];
            let cols = input.len();
            let gw = g.weights.as_mut_slice();
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (w, &a) in gw[o * cols..(o + 1) * cols].iter_mut().zip(input) {
                    *w += d * a;
                }
                g.bias[o] += d;
            }
            if l > 0 {
                let mut prev = self.layers[l].weights.transpose_matvec(&delta)?;
                for (p, &z) in prev.iter_mut().zip(&trace.hidden_pre[l - 1]) {
                    *p *= self.activation.derivative(z);
                }
                delta = prev;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;

    fn single(weights: Matrix, bias: Vec<f64>) -> Network {
        Network::new(vec![Dense::new(weights, bias).unwrap()], Activation::Relu).unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = single(Matrix::identity(2), vec![0.0, 0.0]);
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn zero_weights_return_bias() {
        let net = single(Matrix::zeros(2, 3), vec![3.0, -1.0]);
        assert_eq!(net.forward(&[0.3, -7.0, 2.0]).unwrap(), vec![3.0, -1.0]);
    }

    #[test]
    fn two_layers_match_straight_line_evaluation() {
        // 2 -> 3 -> 2 with hand-picked weights.
        let w1 = Matrix::new(3, 2, vec![0.5, -1.0, -0.25, 2.0, 1.5, 0.5]).unwrap();
        let b1 = vec![0.1, -0.2, -2.0];
        let w2 = Matrix::new(2, 3, vec![1.0, -0.5, 2.0, 0.25, 0.75, -1.0]).unwrap();
        let b2 = vec![0.05, -0.3];
        let net = Network::new(
            vec![Dense::new(w1, b1).unwrap(), Dense::new(w2, b2).unwrap()],
            Activation::Relu,
        )
        .unwrap();

        let x = [1.0, 0.0];
        let h0 = f64::max(0.5 * 1.0 + -1.0 * 0.0 + 0.1, 0.0);
        let h1 = f64::max(-0.25 * 1.0 + 2.0 * 0.0 - 0.2, 0.0);
        let h2 = f64::max(1.5 * 1.0 + 0.5 * 0.0 - 2.0, 0.0);
        let y0 = 1.0 * h0 - 0.5 * h1 + 2.0 * h2 + 0.05;
        let y1 = 0.25 * h0 + 0.75 * h1 - 1.0 * h2 - 0.3;
        let out = net.forward(&x).unwrap();
        assert!((out[0] - y0).abs() < 1e-15 && (out[1] - y1).abs() < 1e-15);
    }

    #[test]
    fn input_dimension_is_checked() {
        let net = single(Matrix::identity(2), vec![0.0, 0.0]);
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape(_))));
        assert!(matches!(net.backward(&[1.0, 2.0], &[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn chained_dimensions_are_checked() {
        let a = Dense::zeros(2, 3);
        let b = Dense::zeros(4, 1);
        assert!(Network::new(vec![a, b], Activation::Relu).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut rng = seeds::rng(1, "t");
        let net = Network::init(&[3, 5, 4], &mut rng).unwrap();
        let g = net.backward(&[0.2, -1.0, 0.7], &[0.0; 4]).unwrap();
        assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn linear_layer_weight_gradient_is_the_input() {
        let mut rng = seeds::rng(2, "t");
        let net = Network::init(&[3, 2], &mut rng).unwrap();
        let x = [0.5, -2.0, 3.0];
        for i in 0..2 {
            let mut up = vec![0.0; 2];
            up[i] = 1.0;
            let g = net.backward(&x, &up).unwrap();
            for r in 0..2 {
                for j in 0..3 {
                    let expected = if r == i { x[j] } else { 0.0 };
                    assert_eq!(g.layers()[0].weights.get(r, j), expected);
                }
                assert_eq!(g.layers()[0].bias[r], if r == i { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = Network::init(&[4, 8, 3], &mut seeds::rng(5, "init")).unwrap();
        let b = Network::init(&[4, 8, 3], &mut seeds::rng(5, "init")).unwrap();
        assert_eq!(a, b);
        let limit = (6.0f64 / 12.0).sqrt();
        assert!(a.layers()[0].weights.as_slice().iter().all(|w| w.abs() <= limit));
        assert_eq!(a.num_params(), 4 * 8 + 8 + 8 * 3 + 3);
    }
}
