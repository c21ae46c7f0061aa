//! Fully connected Q-network with hand-written backpropagation.
//!
//! Parameters live in one flat buffer. Layer `l` maps `sizes[l]` inputs to
//! `sizes[l + 1]` outputs and occupies a row-major weight block
//! (`out × in`) followed by its bias vector. Hidden layers apply the
//! activation; the output layer is linear.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Relu => x.max(S::zero()),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output<S: Scalar>(self, y: S) -> S {
        match self {
            Activation::Relu => {
                if y > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            Activation::Tanh => S::one() - y * y,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpQNetwork<S> {
    sizes: Vec<usize>,
    activation: Activation,
    n_actions: usize,
    params: Vec<S>,
}

/// Post-activation outputs of every layer from one forward pass; `layers[0]`
/// is the input.
#[derive(Debug, Clone)]
pub struct ForwardCache<S> {
    layers: Vec<Vec<S>>,
}

impl<S> ForwardCache<S> {
    pub fn output(&self) -> &[S] {
        self.layers.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<S: Scalar> MlpQNetwork<S> {
    /// All-zero network. `sizes` runs from input dimension to output dimension;
    /// the output dimension must be a multiple of `n_actions`.
    pub fn zeros(sizes: Vec<usize>, n_actions: usize, activation: Activation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::ShapeMismatch("an MLP needs at least two positive layer sizes".into()));
        }
        let out = *sizes.last().unwrap();
        if n_actions == 0 || !out.is_multiple_of(n_actions) {
            return Err(Error::ShapeMismatch(format!(
                "output size {out} is not a multiple of {n_actions} actions"
            )));
        }
        let params = vec![S::zero(); param_count(&sizes)];
        Ok(Self { sizes, activation, n_actions, params })
    }

    /// Uniform initialization in `±1/sqrt(fan_in)` for weights and biases.
    pub fn random<R: Rng + ?Sized>(
        sizes: Vec<usize>,
        n_actions: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(sizes, n_actions, activation)?;
        let mut offset = 0;
        for w in net.sizes.clone().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out + fan_out] {
                *p = S::lit(rng.random_range(-bound..bound));
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn from_params(sizes: Vec<usize>, n_actions: usize, activation: Activation, params: Vec<S>) -> Result<Self> {
        let mut net = Self::zeros(sizes, n_actions, activation)?;
        if params.len() != net.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("MLP parameters"));
        }
        net.params = params;
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [S] {
        &mut self.params
    }

    pub fn forward(&self, input: &[S]) -> Result<ForwardCache<S>> {
        if input.len() != self.input_dim() {
            return Err(Error::FeatureMismatch { expected: self.input_dim(), got: input.len() });
        }
        let n_layers = self.sizes.len() - 1;
        let mut layers = Vec::with_capacity(n_layers + 1);
        layers.push(input.to_vec());
        let mut offset = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let prev = &layers[l];
            let hidden = l + 1 < n_layers;
            let out: Vec<S> = (0..n_out)
                .map(|o| {
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    let z = row.iter().zip(prev).fold(biases[o], |acc, (&w, &x)| acc + w * x);
                    if hidden {
                        self.activation.apply(z)
                    } else {
                        z
                    }
                })
                .collect();
            layers.push(out);
            offset += n_in * n_out + n_out;
        }
        Ok(ForwardCache { layers })
    }

    /// Adds the gradient of `output_gradient · output` with respect to every
    /// parameter into `grads`, using activations recorded in `cache`.
    pub fn backward(&self, cache: &ForwardCache<S>, output_gradient: &[S], grads: &mut [S]) -> Result<()> {
        if output_gradient.len() != self.output_dim() {
            return Err(Error::ShapeMismatch(format!(
                "output gradient has length {}, network emits {}",
                output_gradient.len(),
                self.output_dim()
            )));
        }
        if grads.len() != self.params.len() || cache.layers.len() != self.sizes.len() {
            return Err(Error::ShapeMismatch("gradient buffer or cache does not match network".into()));
        }
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut acc = 0;
        for w in self.sizes.windows(2) {
            offsets.push(acc);
            acc += w[0] * w[1] + w[1];
        }
        let mut delta = output_gradient.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let offset = offsets[l];
            let input = &cache.layers[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == S::zero() {
                    continue;
                }
                let g_row = &mut grads[offset + o * n_in..offset + (o + 1) * n_in];
                for (g, &x) in g_row.iter_mut().zip(input) {
                    *g += d * x;
                }
                grads[offset + n_in * n_out + o] += d;
            }
            if l > 0 {
                let weights = &self.params[offset..offset + n_in * n_out];
                let mut prev = vec![S::zero(); n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    if d == S::zero() {
                        continue;
                    }
                    for (p, &w) in prev.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                        *p += w * d;
                    }
                }
                for (p, &y) in prev.iter_mut().zip(input) {
                    *p *= self.activation.derivative_from_output(y);
                }
                delta = prev;
            }
        }
        Ok(())
    }

    /// Forward then backward in one call; returns the gradient buffer.
    pub fn forward_backward(&self, input: &[S], output_gradient: &[S]) -> Result<Vec<S>> {
        let cache = self.forward(input)?;
        let mut grads = vec![S::zero(); self.params.len()];
        self.backward(&cache, output_gradient, &mut grads)?;
        Ok(grads)
    }
}
