//! Dense feed-forward building blocks: affine layers with ReLU or identity
//! activations, explicit forward caches, reverse-mode gradients, Glorot
//! initialization, and the Adam update.
//!
//! The architecture here is deliberately fixed-function — chains of affine
//! layers — because that is all the model needs; there is no general
//! computation graph. All arithmetic is 64-bit and fully deterministic:
//! identical seeds, data, and configuration produce bit-identical parameter
//! trajectories.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
// Required for float math in no_std builds; when a dependency links std,
// method calls resolve to the inherent f64 methods instead.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use thiserror::Error;

/// The ReLU subgradient at exactly zero. Declared once so tests can assert
/// the convention instead of relying on it silently.
pub const RELU_GRAD_AT_ZERO: f64 = 0.0;

/// Errors from layer evaluation and optimization.
#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    /// An input or upstream-gradient vector had the wrong length.
    #[error("expected a vector of length {expected}, got {got}")]
    DimensionMismatch {
        /// Required length.
        expected: usize,
        /// Length actually supplied.
        got: usize,
    },
    /// A gradient entry was NaN or infinite; the step is aborted.
    #[error("non-finite gradient in parameter block `{parameter}`")]
    NonFiniteGradient {
        /// Name of the offending parameter block.
        parameter: String,
    },
}

/// Elementwise activation applied after the affine map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Activation {
    /// max(0, a), with [`RELU_GRAD_AT_ZERO`] as the subgradient at 0.
    Relu,
    /// The identity map.
    Identity,
}

impl Activation {
    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Relu => a.max(0.0),
            Activation::Identity => a,
        }
    }

    fn grad(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    RELU_GRAD_AT_ZERO
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One affine layer: `out = activation(W·input + b)` with `W` stored
/// row-major as out_dim × in_dim.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DenseLayer {
    /// Input width.
    pub in_dim: usize,
    /// Output width.
    pub out_dim: usize,
    /// Weights, row-major out_dim × in_dim.
    pub weights: Vec<f64>,
    /// Biases, length out_dim.
    pub biases: Vec<f64>,
}

/// Pre-activation state retained by a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct LayerCache {
    input: Vec<f64>,
    pre: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    /// A layer with all weights and biases zero.
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }

    /// Glorot-uniform initialization: weights uniform on
    /// ±sqrt(6/(in_dim+out_dim)), biases zero, keeping early activations in
    /// ReLU's linear region.
    pub fn glorot<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Self {
            in_dim,
            out_dim,
            weights,
            biases: vec![0.0; out_dim],
        }
    }

    /// Number of scalar parameters (weights + biases).
    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    /// Applies the layer, retaining the pre-activation for [`Self::backward`].
    pub fn forward(
        &self,
        input: &[f64],
        activation: Activation,
    ) -> Result<(Vec<f64>, LayerCache), NnError> {
        if input.len() != self.in_dim {
            return Err(NnError::DimensionMismatch {
                expected: self.in_dim,
                got: input.len(),
            });
        }
        let mut pre = vec![0.0; self.out_dim];
        for i in 0..self.out_dim {
            let row = &self.weights[i * self.in_dim..(i + 1) * self.in_dim];
            let mut acc = self.biases[i];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            pre[i] = acc;
        }
        let out = pre.iter().map(|&a| activation.apply(a)).collect();
        let cache = LayerCache {
            input: input.to_vec(),
            pre,
            activation,
        };
        Ok((out, cache))
    }

    /// Chain rule through the layer: accumulates `∂loss/∂W` and `∂loss/∂b`
    /// into the supplied buffers and returns `∂loss/∂input`.
    pub fn backward(
        &self,
        cache: &LayerCache,
        upstream: &[f64],
        grad_w: &mut [f64],
        grad_b: &mut [f64],
    ) -> Result<Vec<f64>, NnError> {
        if upstream.len() != self.out_dim {
            return Err(NnError::DimensionMismatch {
                expected: self.out_dim,
                got: upstream.len(),
            });
        }
        if grad_w.len() != self.weights.len() || grad_b.len() != self.biases.len() {
            return Err(NnError::DimensionMismatch {
                expected: self.weights.len(),
                got: grad_w.len(),
            });
        }
        let mut input_grad = vec![0.0; self.in_dim];
        for i in 0..self.out_dim {
            let g = upstream[i] * cache.activation.grad(cache.pre[i]);
            if g == 0.0 {
                continue;
            }
            grad_b[i] += g;
            let row = i * self.in_dim;
            for j in 0..self.in_dim {
                grad_w[row + j] += g * cache.input[j];
                input_grad[j] += g * self.weights[row + j];
            }
        }
        Ok(input_grad)
    }
}

/// A chain of dense layers: every layer uses ReLU except the last, which uses
/// `final_activation` (identity for decoder/predictor heads, ReLU for the
/// encoder trunk whose output is a hidden representation).
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mlp {
    /// The layer chain; may be empty, in which case the map is the identity.
    pub layers: Vec<DenseLayer>,
    /// Activation of the final layer.
    pub final_activation: Activation,
}

/// Caches from one [`Mlp::forward`] pass.
pub struct MlpCache {
    caches: Vec<LayerCache>,
}

/// Gradient buffers mirroring an [`Mlp`]'s parameter shapes.
#[derive(Clone, Debug)]
pub struct MlpGrads {
    /// Per layer: (weight gradients, bias gradients).
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Mlp {
    /// Builds a Glorot-initialized chain through the given widths
    /// (`dims[0]` is the input width, `dims.last()` the output width).
    pub fn glorot<R: Rng>(dims: &[usize], final_activation: Activation, rng: &mut R) -> Self {
        let layers = dims
            .windows(2)
            .map(|w| DenseLayer::glorot(w[0], w[1], rng))
            .collect();
        Self {
            layers,
            final_activation,
        }
    }

    /// Builds an all-zero chain through the given widths.
    pub fn zeros(dims: &[usize], final_activation: Activation) -> Self {
        let layers = dims
            .windows(2)
            .map(|w| DenseLayer::zeros(w[0], w[1]))
            .collect();
        Self {
            layers,
            final_activation,
        }
    }

    /// Total scalar parameter count.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    fn activation_at(&self, idx: usize) -> Activation {
        if idx + 1 == self.layers.len() {
            self.final_activation
        } else {
            Activation::Relu
        }
    }

    /// Runs the chain; an empty chain returns its input unchanged.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, MlpCache), NnError> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut current = input.to_vec();
        for (idx, layer) in self.layers.iter().enumerate() {
            let (out, cache) = layer.forward(&current, self.activation_at(idx))?;
            caches.push(cache);
            current = out;
        }
        Ok((current, MlpCache { caches }))
    }

    /// Backward pass; accumulates into `grads` and returns `∂loss/∂input`.
    pub fn backward(
        &self,
        cache: &MlpCache,
        upstream: &[f64],
        grads: &mut MlpGrads,
    ) -> Result<Vec<f64>, NnError> {
        let mut g = upstream.to_vec();
        for idx in (0..self.layers.len()).rev() {
            let (gw, gb) = &mut grads.layers[idx];
            g = self.layers[idx].backward(&cache.caches[idx], &g, gw, gb)?;
        }
        Ok(g)
    }

    /// Zeroed gradient buffers matching this chain.
    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            layers: self
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.biases.len()]))
                .collect(),
        }
    }
}

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    /// Step size.
    pub learning_rate: f64,
    /// First-moment decay.
    pub beta1: f64,
    /// Second-moment decay.
    pub beta2: f64,
    /// Denominator fuzz.
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Names the contiguous blocks of a flattened parameter vector so gradient
/// failures can be reported against a human-readable parameter name.
#[derive(Clone, Debug, Default)]
pub struct ParamLayout {
    blocks: Vec<(String, usize)>,
}

impl ParamLayout {
    /// Starts an empty layout.
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a named block of `len` scalars.
    pub fn push(&mut self, name: impl Into<String>, len: usize) {
        self.blocks.push((name.into(), len));
    }

    /// Total number of scalars across all blocks.
    pub fn len(&self) -> usize {
        self.blocks.iter().map(|(_, l)| l).sum()
    }

    /// True when no blocks have been declared.
    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Name of the block containing flat index `idx`.
    pub fn block_of(&self, mut idx: usize) -> &str {
        for (name, len) in &self.blocks {
            if idx < *len {
                return name;
            }
            idx -= len;
        }
        "<out of range>"
    }
}

/// Adam accumulator state over a flattened parameter vector.
#[derive(Clone, Debug)]
pub struct AdamState {
    /// Hyperparameters.
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    /// Fresh state for `len` parameters.
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// Number of steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam descent step in place. The whole step is
    /// aborted (state untouched) if any gradient entry is non-finite, naming
    /// the offending block from `layout`.
    pub fn step(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        layout: &ParamLayout,
    ) -> Result<(), NnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::DimensionMismatch {
                expected: self.m.len(),
                got: grads.len(),
            });
        }
        if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient {
                parameter: String::from(layout.block_of(bad)),
            });
        }
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn relu_convention() {
        assert_eq!(Activation::Relu.grad(0.0), RELU_GRAD_AT_ZERO);
        assert_eq!(Activation::Relu.grad(1e-12), 1.0);
        assert_eq!(Activation::Relu.grad(-1e-12), 0.0);
    }

    #[test]
    fn forward_hand_cases() {
        let mut id2 = DenseLayer::zeros(2, 2);
        id2.weights = alloc::vec![1.0, 0.0, 0.0, 1.0];
        let (out, _) = id2.forward(&[-1.0, 2.0], Activation::Relu).unwrap();
        assert_eq!(out, alloc::vec![0.0, 2.0]);
        let (out, _) = id2.forward(&[-1.0, 2.0], Activation::Identity).unwrap();
        assert_eq!(out, alloc::vec![-1.0, 2.0]);

        let mut sum = DenseLayer::zeros(2, 1);
        sum.weights = alloc::vec![1.0, 1.0];
        sum.biases = alloc::vec![0.5];
        let (out, _) = sum.forward(&[1.0, 2.0], Activation::Identity).unwrap();
        assert_eq!(out, alloc::vec![3.5]);
    }

    #[test]
    fn backward_trivia() {
        let mut id2 = DenseLayer::zeros(2, 2);
        id2.weights = alloc::vec![1.0, 0.0, 0.0, 1.0];
        let (_, cache) = id2.forward(&[0.3, -0.4], Activation::Identity).unwrap();
        let mut gw = alloc::vec![0.0; 4];
        let mut gb = alloc::vec![0.0; 2];
        let zero = id2.backward(&cache, &[0.0, 0.0], &mut gw, &mut gb).unwrap();
        assert!(gw.iter().chain(&gb).chain(&zero).all(|&g| g == 0.0));
        let ig = id2.backward(&cache, &[0.7, -0.2], &mut gw, &mut gb).unwrap();
        assert_eq!(ig, alloc::vec![0.7, -0.2]);
    }

    #[test]
    fn chain_gradients_match_finite_differences() {
        let mut rng = crate::rng::stream_rng(5, crate::rng::Stream::Init);
        let mlp = Mlp::glorot(&[4, 5, 3, 2], Activation::Identity, &mut rng);
        let x = [0.3, -1.1, 0.6, 0.9];
        // Scalar head: loss = Σ_i w_i · out_i with fixed weights.
        let head = [0.7, -1.3];
        let loss = |m: &Mlp| {
            let (out, _) = m.forward(&x).unwrap();
            out.iter().zip(&head).map(|(o, w)| o * w).sum::<f64>()
        };
        let (_, cache) = mlp.forward(&x).unwrap();
        let mut grads = mlp.zero_grads();
        mlp.backward(&cache, &head, &mut grads).unwrap();
        let h = 1e-5;
        for li in 0..mlp.layers.len() {
            for wi in 0..mlp.layers[li].weights.len() {
                let mut plus = mlp.clone();
                plus.layers[li].weights[wi] += h;
                let mut minus = mlp.clone();
                minus.layers[li].weights[wi] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let an = grads.layers[li].0[wi];
                if an.abs() < 1e-8 && fd.abs() < 1e-8 {
                    continue;
                }
                assert_relative_eq!(an, fd, max_relative = 1e-4, epsilon = 1e-8);
            }
            for bi in 0..mlp.layers[li].biases.len() {
                let mut plus = mlp.clone();
                plus.layers[li].biases[bi] += h;
                let mut minus = mlp.clone();
                minus.layers[li].biases[bi] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let an = grads.layers[li].1[bi];
                if an.abs() < 1e-8 && fd.abs() < 1e-8 {
                    continue;
                }
                assert_relative_eq!(an, fd, max_relative = 1e-4, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn gradient_linearity() {
        let mut rng = crate::rng::stream_rng(6, crate::rng::Stream::Init);
        let mlp = Mlp::glorot(&[3, 4, 2], Activation::Identity, &mut rng);
        let x = [0.2, -0.5, 1.4];
        let (_, cache) = mlp.forward(&x).unwrap();
        let mut g1 = mlp.zero_grads();
        mlp.backward(&cache, &[1.0, -2.0], &mut g1).unwrap();
        let mut g2 = mlp.zero_grads();
        mlp.backward(&cache, &[2.0, -4.0], &mut g2).unwrap();
        for (a, b) in g1.layers.iter().zip(&g2.layers) {
            for (x, y) in a.0.iter().zip(&b.0) {
                assert_eq!((2.0 * x).to_bits(), y.to_bits());
            }
            for (x, y) in a.1.iter().zip(&b.1) {
                assert_eq!((2.0 * x).to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn adam_first_step_is_learning_rate() {
        let mut layout = ParamLayout::new();
        layout.push("scalar", 1);
        let mut st = AdamState::new(1, AdamConfig::default());
        let mut p = [0.0];
        st.step(&mut p, &[1.0], &layout).unwrap();
        // Bias-corrected ratio is 1/(√1 + ε·corr) ≈ 1 at t = 1.
        assert_relative_eq!(p[0], -1e-3, max_relative = 1e-4);
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let mut layout = ParamLayout::new();
        layout.push("block", 3);
        let mut st = AdamState::new(3, AdamConfig::default());
        let mut p = [0.4, -0.7, 2.0];
        let before = p;
        st.step(&mut p, &[0.0; 3], &layout).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn adam_rejects_non_finite_and_names_block() {
        let mut layout = ParamLayout::new();
        layout.push("first", 2);
        layout.push("second", 2);
        let mut st = AdamState::new(4, AdamConfig::default());
        let mut p = [0.0; 4];
        let err = st
            .step(&mut p, &[0.0, 0.0, f64::NAN, 0.0], &layout)
            .unwrap_err();
        assert_eq!(
            err,
            NnError::NonFiniteGradient {
                parameter: String::from("second")
            }
        );
        assert_eq!(st.steps(), 0);
        assert_eq!(p, [0.0; 4]);
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut layout = ParamLayout::new();
            layout.push("b", 2);
            let mut st = AdamState::new(2, AdamConfig::default());
            let mut p = [0.1, -0.2];
            for k in 0..50 {
                let g = [0.3 * (k as f64).sin(), -0.1 + 0.01 * k as f64];
                st.step(&mut p, &g, &layout).unwrap();
            }
            p
        };
        let a = run();
        let b = run();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }

    #[test]
    fn glorot_bounds_and_zero_biases() {
        let mut rng = crate::rng::stream_rng(7, crate::rng::Stream::Init);
        let layer = DenseLayer::glorot(30, 10, &mut rng);
        let limit = (6.0 / 40.0f64).sqrt();
        assert!(layer.weights.iter().all(|w| w.abs() < limit));
        assert!(layer.biases.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn empty_chain_is_identity() {
        let mlp = Mlp {
            layers: alloc::vec::Vec::new(),
            final_activation: Activation::Relu,
        };
        let (out, cache) = mlp.forward(&[1.5, -2.5]).unwrap();
        assert_eq!(out, alloc::vec![1.5, -2.5]);
        let mut grads = mlp.zero_grads();
        let g = mlp.backward(&cache, &[0.3, 0.4], &mut grads).unwrap();
        assert_eq!(g, alloc::vec![0.3, 0.4]);
    }
}
