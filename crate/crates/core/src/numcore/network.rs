//! Fixed-architecture feed-forward network.
//!
//! The hidden stack maps an input `x` to the representation `φ(x) ∈ ℝᵖ`; a
//! final affine unit produces `g(x) = wᵀφ(x) + b`. Besides the layer weights
//! the network owns the learnable squared margin `rho_bar`, so that every
//! trainable quantity of the detector lives in one place.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::matrix::{dot, Matrix};
use crate::data::Label;
use crate::error::{Error, Result};
use crate::sphere::loss::LossSpec;

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
            Activation::Identity => z,
        }
    }

    /// Derivative at the pre-activation `z`; the kink takes the left slope.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    weight: Matrix,
    bias: Vec<f64>,
    activation: Activation,
}

impl Layer {
    pub fn new(weight: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::Shape(format!(
                "bias length {} vs {} output units",
                bias.len(),
                weight.rows()
            )));
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weight_mut(&mut self) -> &mut [f64] {
        self.weight.data_mut()
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    hidden: Vec<Layer>,
    final_w: Vec<f64>,
    final_b: f64,
    rho_bar: f64,
}

/// Output of a single forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub phi: Vec<f64>,
    pub g: f64,
}

/// Output of a batched forward pass; row `i` corresponds to input row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchForward {
    pub phi: Matrix,
    pub g: Vec<f64>,
}

/// Gradient of a scalar loss with respect to every trainable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    pub final_w: Vec<f64>,
    pub final_b: f64,
    pub rho_bar: f64,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            weights: net
                .hidden
                .iter()
                .map(|l| Matrix::zeros(l.out_dim(), l.in_dim()))
                .collect(),
            biases: net.hidden.iter().map(|l| vec![0.0; l.out_dim()]).collect(),
            final_w: vec![0.0; net.final_w.len()],
            final_b: 0.0,
            rho_bar: 0.0,
        }
    }

    /// Parameter slots in the same order as [`Network::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(2 * self.weights.len() + 3);
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.data());
            out.push(b);
        }
        out.push(&self.final_w);
        out.push(std::slice::from_ref(&self.final_b));
        out.push(std::slice::from_ref(&self.rho_bar));
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(2 * self.weights.len() + 3);
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.data_mut());
            out.push(b);
        }
        out.push(&mut self.final_w);
        out.push(std::slice::from_mut(&mut self.final_b));
        out.push(std::slice::from_mut(&mut self.rho_bar));
        out
    }

    pub fn is_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}

impl Network {
    /// Assembles a network, checking that layer dimensions chain.
    pub fn new(hidden: Vec<Layer>, final_w: Vec<f64>, final_b: f64, rho_bar: f64) -> Result<Self> {
        if hidden.is_empty() {
            return Err(Error::Shape(
                "network needs at least one hidden layer".into(),
            ));
        }
        for (i, pair) in hidden.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} units but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        let p = hidden.last().map(Layer::out_dim).unwrap_or(0);
        if final_w.len() != p {
            return Err(Error::Shape(format!(
                "final weight length {} vs representation dim {p}",
                final_w.len()
            )));
        }
        Ok(Self {
            hidden,
            final_w,
            final_b,
            rho_bar,
        })
    }

    /// Random initialization.
    ///
    /// Hidden weights are uniform in `±√(6/fan_in)`, biases zero. Every hidden
    /// layer uses leaky ReLU except the last, which is linear so that `φ` spans
    /// all of `ℝᵖ`. The final weight is a random direction with `‖w‖² = 4`,
    /// `b = 0` and `rho_bar = 1`.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, widths: &[usize], rng: &mut R) -> Result<Self> {
        if input_dim == 0 || widths.is_empty() || widths.contains(&0) {
            return Err(Error::Shape(format!(
                "invalid architecture: input {input_dim}, widths {widths:?}"
            )));
        }
        let mut hidden = Vec::with_capacity(widths.len());
        let mut fan_in = input_dim;
        for (i, &out) in widths.iter().enumerate() {
            let limit = (6.0 / fan_in as f64).sqrt();
            let weight = Matrix::from_fn(out, fan_in, |_, _| rng.random_range(-limit..=limit));
            let activation = if i + 1 == widths.len() {
                Activation::Identity
            } else {
                Activation::LeakyRelu
            };
            hidden.push(Layer::new(weight, vec![0.0; out], activation)?);
            fan_in = out;
        }
        let p = fan_in;
        let mut w: Vec<f64> = loop {
            let v: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
            if dot(&v, &v) > 1e-12 {
                break v;
            }
        };
        let scale = 2.0 / dot(&w, &w).sqrt();
        w.iter_mut().for_each(|v| *v *= scale);
        Self::new(hidden, w, 0.0, 1.0)
    }

    pub fn input_dim(&self) -> usize {
        self.hidden[0].in_dim()
    }

    /// Dimension `p` of the representation `φ`.
    pub fn rep_dim(&self) -> usize {
        self.final_w.len()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.hidden
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.hidden
    }

    pub fn final_w(&self) -> &[f64] {
        &self.final_w
    }

    pub fn set_final_w(&mut self, w: Vec<f64>) -> Result<()> {
        if w.len() != self.final_w.len() {
            return Err(Error::Shape(format!(
                "final weight length {} vs {}",
                w.len(),
                self.final_w.len()
            )));
        }
        self.final_w = w;
        Ok(())
    }

    pub fn final_b(&self) -> f64 {
        self.final_b
    }

    pub fn set_final_b(&mut self, b: f64) {
        self.final_b = b;
    }

    pub fn rho_bar(&self) -> f64 {
        self.rho_bar
    }

    pub fn set_rho_bar(&mut self, rho_bar: f64) {
        self.rho_bar = rho_bar;
    }

    /// `‖w‖²` of the final layer.
    pub fn w_norm_sq(&self) -> f64 {
        dot(&self.final_w, &self.final_w)
    }

    /// Sum of squared Frobenius norms of the hidden weight matrices.
    pub fn weight_decay_sum(&self) -> f64 {
        self.hidden.iter().map(|l| l.weight.frobenius_sq()).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input length {} vs network input dim {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut h = x.to_vec();
        for layer in &self.hidden {
            h = layer
                .weight
                .iter_rows()
                .zip(&layer.bias)
                .map(|(row, b)| layer.activation.apply(dot(row, &h) + b))
                .collect();
        }
        let g = dot(&self.final_w, &h) + self.final_b;
        Ok(Forward { phi: h, g })
    }

    pub fn forward_batch(&self, x: &Matrix) -> Result<BatchForward> {
        let trace = self.trace(x)?;
        Ok(trace.into_output(self))
    }

    /// Batched forward pass keeping every pre-activation for backprop.
    fn trace(&self, x: &Matrix) -> Result<Trace> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch has {} columns vs network input dim {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let mut inputs = Vec::with_capacity(self.hidden.len());
        let mut pre = Vec::with_capacity(self.hidden.len());
        let mut h = x.clone();
        for layer in &self.hidden {
            let mut z = h.mul_transpose(&layer.weight)?;
            for i in 0..z.rows() {
                for (v, b) in z.row_mut(i).iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            let mut a = z.clone();
            a.data_mut()
                .iter_mut()
                .for_each(|v| *v = layer.activation.apply(*v));
            inputs.push(h);
            pre.push(z);
            h = a;
        }
        Ok(Trace {
            inputs,
            pre,
            phi: h,
        })
    }

    /// Analytic gradient of `loss` on the batch `(x, labels)`.
    pub fn backward(&self, x: &Matrix, labels: &[Label], loss: &LossSpec) -> Result<Gradients> {
        self.loss_and_gradients(x, labels, loss).map(|(_, g)| g)
    }

    /// Loss value together with its gradient.
    pub fn loss_and_gradients(
        &self,
        x: &Matrix,
        labels: &[Label],
        loss: &LossSpec,
    ) -> Result<(f64, Gradients)> {
        if labels.len() != x.rows() {
            return Err(Error::Shape(format!(
                "{} labels for {} rows",
                labels.len(),
                x.rows()
            )));
        }
        let trace = self.trace(x)?;
        let g: Vec<f64> = trace
            .phi
            .iter_rows()
            .map(|phi| dot(&self.final_w, phi) + self.final_b)
            .collect();
        let head = loss.evaluate_with_grad(self, &trace.phi, &g, labels)?;

        let mut grads = Gradients::zeros_like(self);
        // ∂L/∂φᵢ = explicit part + (∂L/∂gᵢ)·w
        let mut delta = head.d_phi;
        for (i, &dg) in head.d_g.iter().enumerate() {
            if dg == 0.0 {
                continue;
            }
            for (d, w) in delta.row_mut(i).iter_mut().zip(&self.final_w) {
                *d += dg * w;
            }
        }
        grads.final_w = head.d_final_w;
        for (i, &dg) in head.d_g.iter().enumerate() {
            if dg == 0.0 {
                continue;
            }
            for (gw, p) in grads.final_w.iter_mut().zip(trace.phi.row(i)) {
                *gw += dg * p;
            }
        }
        grads.final_b = head.d_final_b + head.d_g.iter().sum::<f64>();
        grads.rho_bar = head.d_rho_bar;

        for l in (0..self.hidden.len()).rev() {
            let layer = &self.hidden[l];
            let z = &trace.pre[l];
            for (d, &zv) in delta.data_mut().iter_mut().zip(z.data()) {
                *d *= layer.activation.derivative(zv);
            }
            let mut gw = delta.transpose_mul(&trace.inputs[l])?;
            if head.decay != 0.0 {
                for (gv, wv) in gw.data_mut().iter_mut().zip(layer.weight.data()) {
                    *gv += head.decay * wv;
                }
            }
            let mut gb = vec![0.0; layer.out_dim()];
            for row in delta.iter_rows() {
                for (b, d) in gb.iter_mut().zip(row) {
                    *b += d;
                }
            }
            grads.weights[l] = gw;
            grads.biases[l] = gb;
            if l > 0 {
                delta = delta.matmul(&layer.weight)?;
            }
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        Ok((head.value, grads))
    }

    /// Mutable parameter slots, ordered like [`Gradients::slices`].
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(2 * self.hidden.len() + 3);
        for layer in &mut self.hidden {
            out.push(layer.weight.data_mut());
            out.push(&mut layer.bias);
        }
        out.push(&mut self.final_w);
        out.push(std::slice::from_mut(&mut self.final_b));
        out.push(std::slice::from_mut(&mut self.rho_bar));
        out
    }

    pub fn param_count(&self) -> usize {
        self.hidden
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum::<usize>()
            + self.final_w.len()
            + 2
    }
}

struct Trace {
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    phi: Matrix,
}

impl Trace {
    fn into_output(self, net: &Network) -> BatchForward {
        let g = self
            .phi
            .iter_rows()
            .map(|phi| dot(&net.final_w, phi) + net.final_b)
            .collect();
        BatchForward { phi: self.phi, g }
    }
}
