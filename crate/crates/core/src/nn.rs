//! Dense-network kernels: layers with explicit forward/backward passes,
//! a multi-layer stack, mean squared error, Adam and a central-difference
//! gradient checker.
//!
//! All arithmetic is f64, row-major, single-sample. Batching is done by the
//! callers, which accumulate gradients across samples.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, invalid, Error, Result};
use crate::math;
use crate::rng::{self, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        check_len(shape.iter().product(), data.len())?;
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("tensor data"));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Self::Identity => 0,
            Self::Relu => 1,
            Self::Tanh => 2,
            Self::Sigmoid => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Self::Identity,
            1 => Self::Relu,
            2 => Self::Tanh,
            3 => Self::Sigmoid,
            _ => return None,
        })
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Self::Identity => x,
            Self::Relu => x.max(0.0),
            Self::Tanh => math::tanh(x),
            Self::Sigmoid => math::sigmoid(x),
        }
    }

    /// Derivative given the pre-activation `x` and output `y`.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Self::Identity => 1.0,
            Self::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Tanh => 1.0 - y * y,
            Self::Sigmoid => y * (1.0 - y),
        }
    }
}

/// `activation(W·x + b)` with `W` of shape `[out, in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weights: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

/// Gradients of one layer contracted with an upstream gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads {
    pub input: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weights: Tensor::zeros(vec![output, input]),
            bias: Tensor::zeros(vec![output]),
            activation,
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init(input: usize, output: usize, activation: Activation, rng: &mut Rng) -> Self {
        let limit = math::sqrt(6.0 / (input + output) as f64);
        let mut layer = Self::zeros(input, output, activation);
        for w in layer.weights.data_mut() {
            *w = rng::uniform(rng, -limit, limit);
        }
        layer
    }

    pub fn from_parts(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(invalid("weights must be a matrix"));
        }
        check_len(weights.shape()[0], bias.len())?;
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn output_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn pre_activation(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.input_dim(), x.len())?;
        let n_in = self.input_dim();
        let w = self.weights.data();
        Ok(self
            .bias
            .data()
            .iter()
            .enumerate()
            .map(|(o, b)| b + math::dot(&w[o * n_in..(o + 1) * n_in], x))
            .collect())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.pre_activation(x)?;
        for v in &mut z {
            *v = self.activation.apply(*v);
        }
        Ok(z)
    }

    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<LayerGrads> {
        let pre = self.pre_activation(x)?;
        check_len(self.output_dim(), upstream.len())?;
        let n_in = self.input_dim();
        let delta: Vec<f64> = pre
            .iter()
            .zip(upstream)
            .map(|(&z, &g)| g * self.activation.derivative(z, self.activation.apply(z)))
            .collect();
        let w = self.weights.data();
        let mut input = vec![0.0; n_in];
        let mut weights = vec![0.0; w.len()];
        for (o, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &w[o * n_in..(o + 1) * n_in];
            let grow = &mut weights[o * n_in..(o + 1) * n_in];
            for i in 0..n_in {
                input[i] += d * row[i];
                grow[i] = d * x[i];
            }
        }
        Ok(LayerGrads {
            input,
            weights,
            bias: delta,
        })
    }
}

pub fn dense_forward(layer: &DenseLayer, x: &[f64]) -> Result<Vec<f64>> {
    layer.forward(x)
}

pub fn dense_backward(layer: &DenseLayer, x: &[f64], upstream: &[f64]) -> Result<LayerGrads> {
    layer.backward(x, upstream)
}

/// A stack of dense layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

/// Per-layer inputs recorded during a forward pass.
#[derive(Clone, Debug)]
pub struct Trace {
    pub inputs: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            check_len(pair[0].output_dim(), pair[1].input_dim())?;
        }
        Ok(Self { layers })
    }

    /// Build from layer widths; `hidden` activation on every layer but the last.
    pub fn with_widths(widths: &[usize], hidden: Activation, output: Activation, rng: &mut Rng) -> Result<Self> {
        if widths.len() < 2 {
            return Err(invalid("need at least input and output widths"));
        }
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                DenseLayer::init(widths[i], widths[i + 1], act, rng)
            })
            .collect();
        Self::new(layers)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut h = self.layers[0].forward(x)?;
        for layer in &self.layers[1..] {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for layer in &self.layers {
            let next = layer.forward(&h)?;
            inputs.push(h);
            h = next;
        }
        Ok(Trace { inputs, output: h })
    }

    /// Backpropagate `upstream` (gradient w.r.t. the output); accumulates
    /// parameter gradients into `acc` (flat, same layout as [`Mlp::params`])
    /// and returns the gradient w.r.t. the input.
    pub fn backward(&self, trace: &Trace, upstream: &[f64], acc: &mut [f64]) -> Result<Vec<f64>> {
        check_len(self.param_count(), acc.len())?;
        let mut g = upstream.to_vec();
        let mut end = acc.len();
        for (layer, x) in self.layers.iter().zip(&trace.inputs).rev() {
            let grads = layer.backward(x, &g)?;
            let start = end - layer.param_count();
            let nw = layer.weights.len();
            for (a, v) in acc[start..start + nw].iter_mut().zip(&grads.weights) {
                *a += v;
            }
            for (a, v) in acc[start + nw..end].iter_mut().zip(&grads.bias) {
                *a += v;
            }
            end = start;
            g = grads.input;
        }
        Ok(g)
    }

    /// Flat parameter vector: per layer, weights then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(l.bias.data());
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        check_len(self.param_count(), flat.len())?;
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.data_mut().copy_from_slice(&flat[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.data_mut().copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    /// Apply one optimizer step with flat gradients.
    pub fn apply_adam(&mut self, adam: &mut Adam, grads: &[f64]) -> Result<()> {
        let mut params = self.params();
        adam.step(&mut params, grads)?;
        self.set_params(&params)
    }
}

/// Mean squared error over elements and its gradient w.r.t. `pred`.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_len(target.len(), pred.len())?;
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, grad))
}

/// Bias-corrected Adam over a flat parameter buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        self.step_segments(&mut [(params, grads)])
    }

    /// One step over several buffers laid out consecutively in moment space.
    pub fn step_segments(&mut self, segments: &mut [(&mut [f64], &[f64])]) -> Result<()> {
        let total: usize = segments.iter().map(|(p, _)| p.len()).sum();
        check_len(self.m.len(), total)?;
        for (p, g) in segments.iter() {
            check_len(p.len(), g.len())?;
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("adam gradients"));
            }
        }
        self.t += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        let mut off = 0;
        for (p, g) in segments.iter_mut() {
            for i in 0..p.len() {
                let k = off + i;
                let gi = g[i];
                self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * gi;
                self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * gi * gi;
                let m_hat = self.m[k] / bc1;
                let v_hat = self.v[k] / bc2;
                p[i] -= self.lr * m_hat / (math::sqrt(v_hat) + self.eps);
            }
            off += p.len();
        }
        Ok(())
    }
}

/// Step used for central differences.
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Max over parameters of `|analytic − numeric| / max(1e-8, |numeric|)`,
/// where `f` returns the value and analytic gradient at a point.
pub fn grad_check<F>(mut f: F, params: &[f64]) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(params);
    let mut x = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + GRAD_CHECK_STEP;
        let plus = f(&x).0;
        x[i] = orig - GRAD_CHECK_STEP;
        let minus = f(&x).0;
        x[i] = orig;
        let numeric = (plus - minus) / (2.0 * GRAD_CHECK_STEP);
        let err = (analytic[i] - numeric).abs() / numeric.abs().max(1e-8);
        worst = worst.max(err);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(w: &[f64], out: usize, inp: usize, b: &[f64], act: Activation) -> DenseLayer {
        DenseLayer::from_parts(
            Tensor::new(vec![out, inp], w.to_vec()).unwrap(),
            Tensor::new(vec![out], b.to_vec()).unwrap(),
            act,
        )
        .unwrap()
    }

    #[test]
    fn identity_layer_passes_through() {
        let l = layer(&[1.0, 0.0, 0.0, 1.0], 2, 2, &[0.0, 0.0], Activation::Identity);
        assert_eq!(l.forward(&[3.5, -2.0]).unwrap(), vec![3.5, -2.0]);
    }

    #[test]
    fn zero_weights_relu_returns_bias() {
        let l = layer(&[0.0; 4], 2, 2, &[1.0, 2.0], Activation::Relu);
        assert_eq!(l.forward(&[7.0, -9.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn forward_shape_mismatch() {
        let l = DenseLayer::zeros(3, 2, Activation::Tanh);
        assert!(matches!(l.forward(&[1.0]), Err(Error::Shape { .. })));
        assert!(l.backward(&[1.0, 2.0, 3.0], &[1.0]).is_err());
    }

    #[test]
    fn identity_backward_bias_is_upstream() {
        let mut r = rng::seeded(1);
        let l = DenseLayer::init(3, 2, Activation::Identity, &mut r);
        let g = l.backward(&[0.1, 0.2, 0.3], &[1.0, 1.0]).unwrap();
        assert_eq!(g.bias, vec![1.0, 1.0]);
    }

    #[test]
    fn relu_dead_units_have_zero_grads() {
        let l = layer(&[1.0, 1.0, 1.0, 1.0], 2, 2, &[-10.0, -10.0], Activation::Relu);
        let g = l.backward(&[1.0, 2.0], &[3.0, -4.0]).unwrap();
        assert!(g.input.iter().chain(&g.weights).chain(&g.bias).all(|v| *v == 0.0));
    }

    #[test]
    fn adam_first_step() {
        let mut adam = Adam::new(1, 0.1);
        let mut p = [0.0];
        adam.step(&mut p, &[1.0]).unwrap();
        assert!((p[0] + 0.1).abs() < 1e-7);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn adam_zero_grads_and_zero_lr() {
        let mut adam = Adam::new(2, 0.1);
        let mut p = [0.25, -3.0];
        adam.step(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, [0.25, -3.0]);
        assert_eq!(adam.t, 1);

        let mut frozen = Adam::new(2, 0.0);
        let mut q = [1.0 / 3.0, 2.0f64.sqrt()];
        let before = q;
        for _ in 0..5 {
            frozen.step(&mut q, &[0.7, -1.3]).unwrap();
        }
        assert_eq!(q[0].to_bits(), before[0].to_bits());
        assert_eq!(q[1].to_bits(), before[1].to_bits());
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut adam = Adam::new(1, 0.1);
        assert!(adam.step(&mut [0.0], &[f64::NAN]).is_err());
        assert_eq!(adam.t, 0);
    }

    #[test]
    fn grad_check_square_and_constant() {
        let err = grad_check(|w| (w[0] * w[0], vec![2.0 * w[0]]), &[3.0]);
        assert!(err < 1e-8);
        let err = grad_check(|_| (4.0, vec![0.0]), &[1.5]);
        assert_eq!(err, 0.0);
    }

    #[test]
    fn mlp_param_round_trip() {
        let mut r = rng::seeded(5);
        let mut m = Mlp::with_widths(&[4, 3, 2], Activation::Tanh, Activation::Identity, &mut r).unwrap();
        let p = m.params();
        assert_eq!(p.len(), 4 * 3 + 3 + 3 * 2 + 2);
        m.set_params(&p).unwrap();
        assert_eq!(m.params(), p);
    }
}
