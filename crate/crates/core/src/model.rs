//! The joint model: an encoder producing a diagonal Gaussian over latents, a
//! reparameterized draw, a Gaussian decoder head for covariate
//! reconstruction, a two-score predictor head mapped through probit links,
//! and a copula joining the two outcome probabilities into cell
//! probabilities. Regions contribute a table of latent prior means smoothed
//! by a graph precision penalty.
//!
//! The training objective is the negated evidence lower bound
//!
//! ```text
//! loss = −[ Σ log p(y|z) + λ·Σ log p(x|z) − Σ kl_z ] + penalty(μ̂, τ)
//! ```
//!
//! with analytic gradients for every learned quantity: all layer tensors,
//! the region-mean table, the log precision `raw_tau`, and the dependence
//! parameter `raw_alpha` (softplus-transformed so α ≥ 1 always).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
// Required for float math in no_std builds; when a dependency links std,
// method calls resolve to the inherent f64 methods instead.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use thiserror::Error;

use crate::copula::{self, ALPHA_MAX, ALPHA_MIN, PROB_CLAMP};
use crate::data::Dataset;
use crate::graph::{self, GraphError, SpatialGraph};
use crate::nn::{Activation, DenseLayer, LayerCache, Mlp, MlpGrads, NnError, ParamLayout};

/// Lower bound of the precision τ; the objective is unbounded as τ → ∞ when
/// the region means collapse to zero, so τ is kept in a wide box.
pub const TAU_MIN: f64 = 1e-3;
/// Upper bound of the precision τ.
pub const TAU_MAX: f64 = 1e3;

/// Errors from model construction and evaluation.
#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    /// The configuration is internally inconsistent.
    #[error("invalid model configuration: {0}")]
    BadConfig(&'static str),
    /// An input had the wrong length.
    #[error("expected a vector of length {expected}, got {got}")]
    DimensionMismatch {
        /// Required length.
        expected: usize,
        /// Length actually supplied.
        got: usize,
    },
    /// A loss component evaluated to NaN or ±∞.
    #[error("non-finite loss in component `{component}`")]
    NonFiniteLoss {
        /// Which component went non-finite.
        component: &'static str,
    },
    /// A layer-level failure.
    #[error(transparent)]
    Nn(#[from] NnError),
    /// A graph-level failure.
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Architecture and fixed hyperparameters of the model.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelConfig {
    /// Covariate dimension.
    pub p: usize,
    /// Latent dimension.
    pub d: usize,
    /// Encoder trunk widths (may be empty: the heads then read x directly).
    pub encoder_hidden: Vec<usize>,
    /// Decoder hidden widths (the final affine layer to width p is implied).
    pub decoder_hidden: Vec<usize>,
    /// Predictor hidden widths (the final affine layer to 2 scores is implied).
    pub predictor_hidden: Vec<usize>,
    /// λ: weight of the covariate reconstruction term.
    pub recon_weight_init: f64,
    /// Initial precision of the region-mean prior.
    pub tau_init: f64,
    /// Initial dependence parameter (≥ 1).
    pub alpha_init: f64,
    /// Variance of the latent prior around the region mean.
    pub prior_z_variance: f64,
    /// Pins α at exactly 1 (independence); `raw_alpha` receives no gradient.
    pub alpha_fixed_at_one: bool,
}

impl ModelConfig {
    /// Checks field-level invariants.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.p == 0 {
            return Err(ModelError::BadConfig("covariate dimension must be positive"));
        }
        if self.d == 0 {
            return Err(ModelError::BadConfig("latent dimension must be positive"));
        }
        if self
            .encoder_hidden
            .iter()
            .chain(&self.decoder_hidden)
            .chain(&self.predictor_hidden)
            .any(|&w| w == 0)
        {
            return Err(ModelError::BadConfig("hidden layer widths must be positive"));
        }
        if !(self.recon_weight_init >= 0.0 && self.recon_weight_init.is_finite()) {
            return Err(ModelError::BadConfig("reconstruction weight must be ≥ 0"));
        }
        if !(self.tau_init > 0.0 && self.tau_init.is_finite()) {
            return Err(ModelError::BadConfig("initial precision must be positive"));
        }
        if !(self.alpha_init >= 1.0 && self.alpha_init.is_finite()) {
            return Err(ModelError::BadConfig("initial dependence parameter must be ≥ 1"));
        }
        if !(self.prior_z_variance > 0.0 && self.prior_z_variance.is_finite()) {
            return Err(ModelError::BadConfig("latent prior variance must be positive"));
        }
        Ok(())
    }
}

/// The variational posterior parameters for one observation.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput {
    /// Posterior mean β.
    pub beta: Vec<f64>,
    /// Posterior log-variance κ (variance = exp κ).
    pub kappa: Vec<f64>,
}

/// Numerically stable ln(1 + e^x).
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`]: ln(e^y − 1) for y > 0.
fn inv_softplus(y: f64) -> f64 {
    y.exp_m1().ln()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probability of a standard normal falling below `eta`, clamped into
/// [`PROB_CLAMP`, 1 − `PROB_CLAMP`], together with its η-derivative (zero
/// where the clamp binds).
pub fn probit_with_grad(eta: f64) -> (f64, f64) {
    let raw = 0.5 * libm::erfc(-eta / core::f64::consts::SQRT_2);
    if raw <= PROB_CLAMP {
        (PROB_CLAMP, 0.0)
    } else if raw >= 1.0 - PROB_CLAMP {
        (1.0 - PROB_CLAMP, 0.0)
    } else {
        let two_pi = 2.0 * core::f64::consts::PI;
        (raw, (-0.5 * eta * eta).exp() / two_pi.sqrt())
    }
}

/// Probit link: the clamped standard normal CDF.
pub fn probit_marginal(eta: f64) -> f64 {
    probit_with_grad(eta).0
}

/// z = β + exp(0.5κ) ⊙ ε.
pub fn reparameterize(out: &EncoderOutput, eps: &[f64]) -> Vec<f64> {
    out.beta
        .iter()
        .zip(&out.kappa)
        .zip(eps)
        .map(|((b, k), e)| b + (0.5 * k).exp() * e)
        .collect()
}

/// Closed-form KL divergence from the diagonal Gaussian N(β, exp κ) to the
/// prior N(μ, prior_var·I), summed over dimensions.
pub fn kl_z(out: &EncoderOutput, mu_row: &[f64], prior_var: f64) -> f64 {
    debug_assert!(prior_var > 0.0);
    let mut acc = 0.0;
    for ((b, k), m) in out.beta.iter().zip(&out.kappa).zip(mu_row) {
        let diff = b - m;
        acc += 0.5 * prior_var.ln() - 0.5 * k + (k.exp() + diff * diff) / (2.0 * prior_var) - 0.5;
    }
    acc
}

/// The τ- and μ̂-dependent part of the negated log prior over the region
/// means: Σ_k [ (τ/2)·μ̂_kᵀQμ̂_k − (L/2)·ln τ ], constants dropped.
/// `mu_table` is row-major L×d; column k is one surface over regions.
pub fn mu_prior_penalty(
    mu_table: &[f64],
    d: usize,
    graph: &SpatialGraph,
    tau: f64,
) -> Result<f64, ModelError> {
    let l = graph.len();
    if mu_table.len() != l * d {
        return Err(ModelError::DimensionMismatch {
            expected: l * d,
            got: mu_table.len(),
        });
    }
    let mut col = vec![0.0; l];
    let mut q_sum = 0.0;
    for k in 0..d {
        for (j, c) in col.iter_mut().enumerate() {
            *c = mu_table[j * d + k];
        }
        q_sum += graph::quadratic_form(&col, graph)?;
    }
    Ok(0.5 * tau * q_sum - 0.5 * (d * l) as f64 * tau.ln())
}

/// All learned quantities of the model.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelParams {
    /// Architecture and fixed hyperparameters.
    pub config: ModelConfig,
    /// Encoder trunk (ReLU throughout; may be empty).
    pub trunk: Mlp,
    /// Affine head producing β.
    pub head_mean: DenseLayer,
    /// Affine head producing κ.
    pub head_logvar: DenseLayer,
    /// Decoder: latent → reconstructed covariates (affine final layer).
    pub decoder: Mlp,
    /// Predictor: latent → two real scores (affine final layer).
    pub predictor: Mlp,
    /// Region mean table μ̂, row-major L×d.
    pub mu_table: Vec<f64>,
    /// Number of regions L.
    pub n_regions: usize,
    /// Unconstrained precision: τ = exp(raw_tau), boxed to [TAU_MIN, TAU_MAX].
    pub raw_tau: f64,
    /// Unconstrained dependence: α = 1 + softplus(raw_alpha).
    pub raw_alpha: f64,
    /// λ: reconstruction weight (fixed during training, swept externally).
    pub recon_weight: f64,
    /// Regions that appeared in training data; others fall back to
    /// neighbour averages in [`Self::mu_row_resolved`].
    pub seen_regions: Vec<bool>,
}

/// The four objective components as plain (unscaled, unweighted) batch sums.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ElboBreakdown {
    /// Σ log p(y|z): copula cell log-likelihood.
    pub recon_y: f64,
    /// Σ log p(x|z): unit-variance Gaussian reconstruction log-likelihood.
    pub recon_x: f64,
    /// Σ kl_z: latent posterior-to-prior divergence.
    pub kl_z: f64,
    /// The region-mean prior penalty (per model, not per observation).
    pub kl_mu: f64,
}

/// Gradient buffers mirroring [`ModelParams`].
#[derive(Clone, Debug)]
pub struct ModelGrads {
    /// Encoder trunk gradients.
    pub trunk: MlpGrads,
    /// (weights, biases) of the mean head.
    pub head_mean: (Vec<f64>, Vec<f64>),
    /// (weights, biases) of the log-variance head.
    pub head_logvar: (Vec<f64>, Vec<f64>),
    /// Decoder gradients.
    pub decoder: MlpGrads,
    /// Predictor gradients.
    pub predictor: MlpGrads,
    /// Region-mean table gradient, row-major L×d.
    pub mu_table: Vec<f64>,
    /// Gradient on raw_tau.
    pub raw_tau: f64,
    /// Gradient on raw_alpha (zero when α is pinned at 1).
    pub raw_alpha: f64,
}

impl ModelGrads {
    /// Flattens gradients in the same order as [`ModelParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.trunk.layers {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out.extend_from_slice(&self.head_mean.0);
        out.extend_from_slice(&self.head_mean.1);
        out.extend_from_slice(&self.head_logvar.0);
        out.extend_from_slice(&self.head_logvar.1);
        for (w, b) in &self.decoder.layers {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        for (w, b) in &self.predictor.layers {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out.extend_from_slice(&self.mu_table);
        out.push(self.raw_tau);
        out.push(self.raw_alpha);
        out
    }
}

struct EncoderCaches {
    trunk: crate::nn::MlpCache,
    mean: LayerCache,
    logvar: LayerCache,
}

impl ModelParams {
    /// Glorot-initializes a model for `n_regions` regions. The region-mean
    /// table starts at zero; τ and α start at their configured values.
    pub fn init<R: Rng>(
        config: ModelConfig,
        n_regions: usize,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        if n_regions == 0 {
            return Err(ModelError::BadConfig("at least one region is required"));
        }
        let mut trunk_dims = vec![config.p];
        trunk_dims.extend_from_slice(&config.encoder_hidden);
        let trunk = Mlp::glorot(&trunk_dims, Activation::Relu, rng);
        let trunk_out = *trunk_dims.last().expect("nonempty dims");
        let head_mean = DenseLayer::glorot(trunk_out, config.d, rng);
        let head_logvar = DenseLayer::glorot(trunk_out, config.d, rng);
        let mut dec_dims = vec![config.d];
        dec_dims.extend_from_slice(&config.decoder_hidden);
        dec_dims.push(config.p);
        let decoder = Mlp::glorot(&dec_dims, Activation::Identity, rng);
        let mut pred_dims = vec![config.d];
        pred_dims.extend_from_slice(&config.predictor_hidden);
        pred_dims.push(2);
        let predictor = Mlp::glorot(&pred_dims, Activation::Identity, rng);
        let raw_tau = config.tau_init.ln();
        let raw_alpha = inv_softplus((config.alpha_init - 1.0).max(ALPHA_MIN - 1.0));
        let recon_weight = config.recon_weight_init;
        let mu_table = vec![0.0; n_regions * config.d];
        Ok(Self {
            config,
            trunk,
            head_mean,
            head_logvar,
            decoder,
            predictor,
            mu_table,
            n_regions,
            raw_tau,
            raw_alpha,
            recon_weight,
            seen_regions: vec![false; n_regions],
        })
    }

    /// Current precision τ = exp(raw_tau), boxed.
    pub fn tau(&self) -> f64 {
        self.raw_tau.exp().clamp(TAU_MIN, TAU_MAX)
    }

    /// Current dependence parameter α; exactly 1 when pinned.
    pub fn alpha(&self) -> f64 {
        if self.config.alpha_fixed_at_one {
            1.0
        } else {
            (1.0 + softplus(self.raw_alpha)).clamp(ALPHA_MIN, ALPHA_MAX)
        }
    }

    /// Projects the unconstrained scalars back into their boxes; call after
    /// every optimizer step.
    pub fn clamp_raw_scalars(&mut self) {
        self.raw_tau = self.raw_tau.clamp(TAU_MIN.ln(), TAU_MAX.ln());
        if !self.config.alpha_fixed_at_one {
            let lo = inv_softplus(ALPHA_MIN - 1.0);
            let hi = inv_softplus(ALPHA_MAX - 1.0);
            self.raw_alpha = self.raw_alpha.clamp(lo, hi);
        }
    }

    /// Marks regions as observed during training.
    pub fn mark_seen(&mut self, regions: &[usize]) {
        for &r in regions {
            if r < self.n_regions {
                self.seen_regions[r] = true;
            }
        }
    }

    /// Region-mean row for region `j`.
    pub fn mu_row(&self, j: usize) -> &[f64] {
        let d = self.config.d;
        &self.mu_table[j * d..(j + 1) * d]
    }

    /// Region mean with the unseen-region fallback: a seen region returns
    /// its own row; an unseen one the average of its seen neighbours' rows;
    /// failing that, the average over all seen rows; failing that, zeros.
    pub fn mu_row_resolved(&self, region: usize, graph: &SpatialGraph) -> Vec<f64> {
        let d = self.config.d;
        if region < self.n_regions && self.seen_regions[region] {
            return self.mu_row(region).to_vec();
        }
        let mut acc = vec![0.0; d];
        let mut count = 0usize;
        if region < self.n_regions && graph.len() == self.n_regions {
            for nb in graph.neighbours(region) {
                if self.seen_regions[nb] {
                    for (a, v) in acc.iter_mut().zip(self.mu_row(nb)) {
                        *a += v;
                    }
                    count += 1;
                }
            }
        }
        if count == 0 {
            for j in 0..self.n_regions {
                if self.seen_regions[j] {
                    for (a, v) in acc.iter_mut().zip(self.mu_row(j)) {
                        *a += v;
                    }
                    count += 1;
                }
            }
        }
        if count > 0 {
            for a in &mut acc {
                *a /= count as f64;
            }
        }
        acc
    }

    fn encode_cached(&self, x: &[f64]) -> Result<(EncoderOutput, EncoderCaches), ModelError> {
        if x.len() != self.config.p {
            return Err(ModelError::DimensionMismatch {
                expected: self.config.p,
                got: x.len(),
            });
        }
        let (h, trunk_cache) = self.trunk.forward(x)?;
        let (beta, mean_cache) = self.head_mean.forward(&h, Activation::Identity)?;
        let (kappa, logvar_cache) = self.head_logvar.forward(&h, Activation::Identity)?;
        Ok((
            EncoderOutput { beta, kappa },
            EncoderCaches {
                trunk: trunk_cache,
                mean: mean_cache,
                logvar: logvar_cache,
            },
        ))
    }

    /// Variational posterior parameters for one covariate row.
    pub fn encode(&self, x: &[f64]) -> Result<EncoderOutput, ModelError> {
        self.encode_cached(x).map(|(out, _)| out)
    }

    /// Reconstruction mean x̂ for a latent point.
    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>, ModelError> {
        Ok(self.decoder.forward(z)?.0)
    }

    /// The two real outcome scores for a latent point.
    pub fn predict_heads(&self, z: &[f64]) -> Result<(f64, f64), ModelError> {
        let (eta, _) = self.predictor.forward(z)?;
        Ok((eta[0], eta[1]))
    }

    /// Plug-in marginal outcome probabilities at the posterior mean z = β;
    /// deterministic, used for scoring.
    pub fn marginal_probs_at_mean(&self, x: &[f64]) -> Result<(f64, f64), ModelError> {
        let out = self.encode(x)?;
        let (eta1, eta2) = self.predict_heads(&out.beta)?;
        Ok((probit_marginal(eta1), probit_marginal(eta2)))
    }

    /// The region-prior penalty at the current τ.
    pub fn penalty(&self, graph: &SpatialGraph) -> Result<f64, ModelError> {
        mu_prior_penalty(&self.mu_table, self.config.d, graph, self.tau())
    }

    /// Negated-ELBO over a batch with both data and penalty terms at weight
    /// 1 (plain sums). `eps` holds one standard-normal vector of length d
    /// per entry of `indices`, concatenated.
    pub fn elbo_batch(
        &self,
        data: &Dataset,
        indices: &[usize],
        eps: &[f64],
        graph: &SpatialGraph,
    ) -> Result<(f64, ElboBreakdown), ModelError> {
        self.elbo_batch_scaled(data, indices, eps, graph, 1.0, 1.0)
    }

    /// Negated-ELBO with the data sums multiplied by `data_scale` and the
    /// penalty by `penalty_scale`. The breakdown stays unscaled.
    pub fn elbo_batch_scaled(
        &self,
        data: &Dataset,
        indices: &[usize],
        eps: &[f64],
        graph: &SpatialGraph,
        data_scale: f64,
        penalty_scale: f64,
    ) -> Result<(f64, ElboBreakdown), ModelError> {
        let (loss, breakdown, _) =
            self.elbo_batch_grad(data, indices, eps, graph, data_scale, penalty_scale)?;
        Ok((loss, breakdown))
    }

    /// Negated-ELBO plus analytic gradients for every learned quantity.
    /// Gradients are of the scaled loss; one ε draw per observation.
    pub fn elbo_batch_grad(
        &self,
        data: &Dataset,
        indices: &[usize],
        eps: &[f64],
        graph: &SpatialGraph,
        data_scale: f64,
        penalty_scale: f64,
    ) -> Result<(f64, ElboBreakdown, ModelGrads), ModelError> {
        self.elbo_batch_grad_weighted(data, indices, eps, graph, data_scale, penalty_scale, 1.0)
    }

    /// [`Self::elbo_batch_grad`] with the latent KL term multiplied by
    /// `kl_weight`. The trainer ramps this weight from 0 to 1 over early
    /// epochs so the encoder learns an informative posterior before the
    /// prior starts pruning it; at `kl_weight = 1` the two methods agree
    /// exactly. The breakdown always reports the unweighted components.
    #[allow(clippy::too_many_arguments)]
    pub fn elbo_batch_grad_weighted(
        &self,
        data: &Dataset,
        indices: &[usize],
        eps: &[f64],
        graph: &SpatialGraph,
        data_scale: f64,
        penalty_scale: f64,
        kl_weight: f64,
    ) -> Result<(f64, ElboBreakdown, ModelGrads), ModelError> {
        if !(kl_weight >= 0.0 && kl_weight.is_finite()) {
            return Err(ModelError::BadConfig("kl weight must be ≥ 0 and finite"));
        }
        let p = self.config.p;
        let d = self.config.d;
        if data.p() != p {
            return Err(ModelError::DimensionMismatch {
                expected: p,
                got: data.p(),
            });
        }
        if eps.len() != indices.len() * d {
            return Err(ModelError::DimensionMismatch {
                expected: indices.len() * d,
                got: eps.len(),
            });
        }
        if graph.len() != self.n_regions {
            return Err(ModelError::DimensionMismatch {
                expected: self.n_regions,
                got: graph.len(),
            });
        }
        let lambda = self.recon_weight;
        let alpha = self.alpha();
        let prior_var = self.config.prior_z_variance;
        let two_pi = 2.0 * core::f64::consts::PI;
        let half_p_ln_2pi = 0.5 * p as f64 * two_pi.ln();

        let mut grads = ModelGrads {
            trunk: self.trunk.zero_grads(),
            head_mean: (
                vec![0.0; self.head_mean.weights.len()],
                vec![0.0; self.head_mean.biases.len()],
            ),
            head_logvar: (
                vec![0.0; self.head_logvar.weights.len()],
                vec![0.0; self.head_logvar.biases.len()],
            ),
            decoder: self.decoder.zero_grads(),
            predictor: self.predictor.zero_grads(),
            mu_table: vec![0.0; self.mu_table.len()],
            raw_tau: 0.0,
            raw_alpha: 0.0,
        };

        let mut sum_ly = 0.0;
        let mut sum_lx = 0.0;
        let mut sum_kl = 0.0;
        let mut g_alpha_acc = 0.0;

        for (t, &i) in indices.iter().enumerate() {
            if i >= data.n() {
                return Err(ModelError::DimensionMismatch {
                    expected: data.n(),
                    got: i,
                });
            }
            let x = data.x_row(i);
            let [y1, y2] = data.y[i];
            let region = data.region[i];
            let e = &eps[t * d..(t + 1) * d];

            let (enc, caches) = self.encode_cached(x)?;
            let z = reparameterize(&enc, e);
            let (xhat, dec_cache) = self.decoder.forward(&z)?;
            let (eta, pred_cache) = self.predictor.forward(&z)?;
            let (p1, dp1) = probit_with_grad(eta[0]);
            let (p2, dp2) = probit_with_grad(eta[1]);
            let ws = copula::cell_workspace(p1, p2, alpha);
            let idx = copula::cell_index(y1, y2);
            sum_ly += ws.log_cell(idx);
            let mut sq = 0.0;
            for (xv, xh) in x.iter().zip(&xhat) {
                let r = xv - xh;
                sq += r * r;
            }
            sum_lx += -0.5 * sq - half_p_ln_2pi;
            let mu = self.mu_row(region);
            sum_kl += kl_z(&enc, mu, prior_var);

            // Backward. Coefficients in the scaled loss: −ds on log p(y),
            // −ds·λ on log p(x), +ds on kl.
            let g_ly = -data_scale;
            let dlc = ws.dlog_cell(idx);
            g_alpha_acc += g_ly * dlc[2];
            let g_eta = [g_ly * dlc[0] * dp1, g_ly * dlc[1] * dp2];
            let g_z_pred = self.predictor.backward(&pred_cache, &g_eta, &mut grads.predictor)?;
            let g_xhat: Vec<f64> = x
                .iter()
                .zip(&xhat)
                .map(|(xv, xh)| -data_scale * lambda * (xv - xh))
                .collect();
            let g_z_dec = self.decoder.backward(&dec_cache, &g_xhat, &mut grads.decoder)?;

            let mut g_beta = vec![0.0; d];
            let mut g_kappa = vec![0.0; d];
            for k in 0..d {
                let g_z = g_z_pred[k] + g_z_dec[k];
                let diff = enc.beta[k] - mu[k];
                g_beta[k] = g_z + kl_weight * data_scale * diff / prior_var;
                g_kappa[k] = g_z * 0.5 * (0.5 * enc.kappa[k]).exp() * e[k]
                    + kl_weight * data_scale * (-0.5 + enc.kappa[k].exp() / (2.0 * prior_var));
                grads.mu_table[region * d + k] -= kl_weight * data_scale * diff / prior_var;
            }
            let g_h_mean = self.head_mean.backward(
                &caches.mean,
                &g_beta,
                &mut grads.head_mean.0,
                &mut grads.head_mean.1,
            )?;
            let mut g_h = self.head_logvar.backward(
                &caches.logvar,
                &g_kappa,
                &mut grads.head_logvar.0,
                &mut grads.head_logvar.1,
            )?;
            for (a, b) in g_h.iter_mut().zip(&g_h_mean) {
                *a += b;
            }
            self.trunk.backward(&caches.trunk, &g_h, &mut grads.trunk)?;
        }

        // Penalty forward + gradients on the mean table and raw_tau.
        let tau = self.tau();
        let l = self.n_regions;
        let mut col = vec![0.0; l];
        let mut qcol = vec![0.0; l];
        let mut q_sum = 0.0;
        for k in 0..d {
            for (j, c) in col.iter_mut().enumerate() {
                *c = self.mu_table[j * d + k];
            }
            q_sum += graph::quadratic_form(&col, graph)?;
            for q in &mut qcol {
                *q = 0.0;
            }
            graph.precision_product_into(&col, penalty_scale * tau, &mut qcol);
            for (j, q) in qcol.iter().enumerate() {
                grads.mu_table[j * d + k] += q;
            }
        }
        let pen = 0.5 * tau * q_sum - 0.5 * (d * l) as f64 * tau.ln();
        grads.raw_tau = penalty_scale * (0.5 * tau * q_sum - 0.5 * (d * l) as f64);
        grads.raw_alpha = if self.config.alpha_fixed_at_one {
            0.0
        } else {
            g_alpha_acc * sigmoid(self.raw_alpha)
        };

        let breakdown = ElboBreakdown {
            recon_y: sum_ly,
            recon_x: sum_lx,
            kl_z: sum_kl,
            kl_mu: pen,
        };
        for (value, component) in [
            (breakdown.recon_y, "recon_y"),
            (breakdown.recon_x, "recon_x"),
            (breakdown.kl_z, "kl_z"),
            (breakdown.kl_mu, "kl_mu"),
        ] {
            if !value.is_finite() {
                return Err(ModelError::NonFiniteLoss { component });
            }
        }
        let loss =
            data_scale * (-sum_ly - lambda * sum_lx + kl_weight * sum_kl) + penalty_scale * pen;
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss { component: "total" });
        }
        Ok((loss, breakdown, grads))
    }

    /// Flattens every learned scalar in a fixed order (the same order as
    /// [`Self::layout`] and [`ModelGrads::to_flat`]).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.trunk.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.biases);
        }
        out.extend_from_slice(&self.head_mean.weights);
        out.extend_from_slice(&self.head_mean.biases);
        out.extend_from_slice(&self.head_logvar.weights);
        out.extend_from_slice(&self.head_logvar.biases);
        for layer in &self.decoder.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.biases);
        }
        for layer in &self.predictor.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.biases);
        }
        out.extend_from_slice(&self.mu_table);
        out.push(self.raw_tau);
        out.push(self.raw_alpha);
        out
    }

    /// Writes a flat vector (same order as [`Self::to_flat`]) back into the
    /// parameter tensors.
    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<(), ModelError> {
        let expected = self.param_count();
        if flat.len() != expected {
            return Err(ModelError::DimensionMismatch {
                expected,
                got: flat.len(),
            });
        }
        let mut pos = 0usize;
        let take = |dst: &mut [f64], pos: &mut usize| {
            dst.copy_from_slice(&flat[*pos..*pos + dst.len()]);
            *pos += dst.len();
        };
        for layer in &mut self.trunk.layers {
            take(&mut layer.weights, &mut pos);
            take(&mut layer.biases, &mut pos);
        }
        take(&mut self.head_mean.weights, &mut pos);
        take(&mut self.head_mean.biases, &mut pos);
        take(&mut self.head_logvar.weights, &mut pos);
        take(&mut self.head_logvar.biases, &mut pos);
        for layer in &mut self.decoder.layers {
            take(&mut layer.weights, &mut pos);
            take(&mut layer.biases, &mut pos);
        }
        for layer in &mut self.predictor.layers {
            take(&mut layer.weights, &mut pos);
            take(&mut layer.biases, &mut pos);
        }
        take(&mut self.mu_table, &mut pos);
        self.raw_tau = flat[pos];
        self.raw_alpha = flat[pos + 1];
        Ok(())
    }

    /// Names each contiguous block of the flattened parameter vector.
    pub fn layout(&self) -> ParamLayout {
        let mut layout = ParamLayout::new();
        for (i, layer) in self.trunk.layers.iter().enumerate() {
            layout.push(format!("encoder.hidden{i}.weights"), layer.weights.len());
            layout.push(format!("encoder.hidden{i}.bias"), layer.biases.len());
        }
        layout.push("encoder.mean_head.weights", self.head_mean.weights.len());
        layout.push("encoder.mean_head.bias", self.head_mean.biases.len());
        layout.push("encoder.logvar_head.weights", self.head_logvar.weights.len());
        layout.push("encoder.logvar_head.bias", self.head_logvar.biases.len());
        for (i, layer) in self.decoder.layers.iter().enumerate() {
            layout.push(format!("decoder.layer{i}.weights"), layer.weights.len());
            layout.push(format!("decoder.layer{i}.bias"), layer.biases.len());
        }
        for (i, layer) in self.predictor.layers.iter().enumerate() {
            layout.push(format!("predictor.layer{i}.weights"), layer.weights.len());
            layout.push(format!("predictor.layer{i}.bias"), layer.biases.len());
        }
        layout.push("region_means", self.mu_table.len());
        layout.push("log_tau", 1);
        layout.push("alpha_raw", 1);
        layout
    }

    /// Total number of learned scalars.
    pub fn param_count(&self) -> usize {
        self.trunk.param_count()
            + self.head_mean.param_count()
            + self.head_logvar.param_count()
            + self.decoder.param_count()
            + self.predictor.param_count()
            + self.mu_table.len()
            + 2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use alloc::string::ToString;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            p: 3,
            d: 2,
            encoder_hidden: alloc::vec![4],
            decoder_hidden: alloc::vec![4],
            predictor_hidden: alloc::vec![3],
            recon_weight_init: 0.7,
            tau_init: 1.0,
            alpha_init: 1.5,
            prior_z_variance: 1.0,
            alpha_fixed_at_one: false,
        }
    }

    fn path3() -> SpatialGraph {
        SpatialGraph::new(3, &[(0, 1), (1, 2)], 0.9).unwrap()
    }

    fn tiny_dataset() -> Dataset {
        Dataset::new(
            alloc::vec![
                0.3, -0.2, 1.1, //
                -0.5, 0.4, 0.2, //
                0.9, -1.0, -0.3, //
                0.1, 0.8, -0.6,
            ],
            alloc::vec![[1, 1], [1, 0], [0, 1], [0, 0]],
            alloc::vec![0, 1, 2, 0],
            3,
            (0..3).map(|i| alloc::format!("x{i}")).collect(),
        )
        .unwrap()
    }

    fn tiny_model(seed: u64) -> ModelParams {
        let mut rng = stream_rng(seed, Stream::Init);
        ModelParams::init(tiny_config(), 3, &mut rng).unwrap()
    }

    fn eps_for(seed: u64, count: usize, d: usize) -> Vec<f64> {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = stream_rng(seed, Stream::Eps);
        (0..count * d)
            .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect()
    }

    #[test]
    fn zero_weights_encode_to_standard_posterior() {
        let mut params = tiny_model(0);
        params.trunk = Mlp::zeros(&[3, 4], Activation::Relu);
        params.head_mean = DenseLayer::zeros(4, 2);
        params.head_logvar = DenseLayer::zeros(4, 2);
        let out = params.encode(&[0.5, -0.5, 2.0]).unwrap();
        assert_eq!(out.beta, alloc::vec![0.0, 0.0]);
        assert_eq!(out.kappa, alloc::vec![0.0, 0.0]);
    }

    #[test]
    fn encode_hand_arithmetic_depth_zero() {
        // No trunk: heads read x directly. β = W x + b with hand-set W.
        let config = ModelConfig {
            p: 2,
            d: 2,
            encoder_hidden: alloc::vec![],
            ..tiny_config()
        };
        let mut rng = stream_rng(0, Stream::Init);
        let mut params = ModelParams::init(config, 3, &mut rng).unwrap();
        params.head_mean.weights = alloc::vec![1.0, 2.0, -1.0, 0.5];
        params.head_mean.biases = alloc::vec![0.25, -0.75];
        let out = params.encode(&[3.0, -1.0]).unwrap();
        assert_abs_diff_eq!(out.beta[0], 3.0 - 2.0 + 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(out.beta[1], -3.0 - 0.5 - 0.75, epsilon = 1e-12);
        let again = params.encode(&[3.0, -1.0]).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn reparameterize_cases() {
        let out = EncoderOutput {
            beta: alloc::vec![0.4, -1.2],
            kappa: alloc::vec![0.0, 0.0],
        };
        assert_eq!(reparameterize(&out, &[0.0, 0.0]), out.beta);
        assert_eq!(
            reparameterize(&out, &[1.0, 1.0]),
            alloc::vec![1.4, -0.19999999999999996]
        );
        // ∂z/∂κ = 0.5·exp(0.5κ)·ε by finite differences.
        let e = [0.7, -0.3];
        let h = 1e-6;
        for k in 0..2 {
            let mut plus = out.clone();
            plus.kappa[k] += h;
            let mut minus = out.clone();
            minus.kappa[k] -= h;
            let fd = (reparameterize(&plus, &e)[k] - reparameterize(&minus, &e)[k]) / (2.0 * h);
            let an = 0.5 * (0.5 * out.kappa[k]).exp() * e[k];
            assert_relative_eq!(an, fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn probit_values() {
        assert_eq!(probit_marginal(0.0), 0.5);
        assert_abs_diff_eq!(
            probit_marginal(-1.3) + probit_marginal(1.3),
            1.0,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(probit_marginal(1.0), 0.8413447460685429, epsilon = 1e-12);
        // Clamped extremes: probability pinned, gradient zero.
        let (lo, glo) = probit_with_grad(-10.0);
        let (hi, ghi) = probit_with_grad(10.0);
        assert_eq!(lo, PROB_CLAMP);
        assert_eq!(hi, 1.0 - PROB_CLAMP);
        assert_eq!(glo, 0.0);
        assert_eq!(ghi, 0.0);
        // Interior gradient is the normal density.
        let (_, g) = probit_with_grad(0.0);
        assert_abs_diff_eq!(g, 0.3989422804014327, epsilon = 1e-15);
    }

    #[test]
    fn kl_closed_form() {
        let same = EncoderOutput {
            beta: alloc::vec![0.3, -0.4],
            kappa: alloc::vec![0.0, 0.0],
        };
        assert_abs_diff_eq!(kl_z(&same, &[0.3, -0.4], 1.0), 0.0, epsilon = 1e-15);
        let shifted = EncoderOutput {
            beta: alloc::vec![1.0, 1.0],
            kappa: alloc::vec![0.0, 0.0],
        };
        assert_abs_diff_eq!(kl_z(&shifted, &[0.0, 0.0], 1.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn kl_nonnegative_randomized() {
        use rand::Rng;
        let mut rng = stream_rng(11, Stream::Init);
        for _ in 0..10_000 {
            let d = rng.random_range(1..4usize);
            let out = EncoderOutput {
                beta: (0..d).map(|_| rng.random_range(-3.0..3.0)).collect(),
                kappa: (0..d).map(|_| rng.random_range(-3.0..3.0)).collect(),
            };
            let mu: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let v = rng.random_range(0.1..5.0);
            assert!(kl_z(&out, &mu, v) >= -1e-12);
        }
    }

    #[test]
    fn penalty_values() {
        let g = path3();
        let zero = alloc::vec![0.0; 6];
        assert_eq!(mu_prior_penalty(&zero, 2, &g, 1.0).unwrap(), 0.0);
        let e = core::f64::consts::E;
        assert_abs_diff_eq!(
            mu_prior_penalty(&zero, 2, &g, e).unwrap(),
            -3.0,
            epsilon = 1e-12
        );
        // Doubling μ̂ quadruples the quadratic part (τ = 1 kills the log term).
        let mu = alloc::vec![0.3, -0.1, 0.5, 0.2, -0.7, 0.4];
        let doubled: Vec<f64> = mu.iter().map(|v| 2.0 * v).collect();
        let base = mu_prior_penalty(&mu, 2, &g, 1.0).unwrap();
        let quad = mu_prior_penalty(&doubled, 2, &g, 1.0).unwrap();
        assert_relative_eq!(quad, 4.0 * base, max_relative = 1e-12);
        assert!(matches!(
            mu_prior_penalty(&zero[..4], 2, &g, 1.0),
            Err(ModelError::DimensionMismatch { expected: 6, got: 4 })
        ));
    }

    #[test]
    fn penalty_bounded_below_over_tau_box() {
        let g = path3();
        let mu = alloc::vec![0.5, -0.2, 0.1, 0.9, -0.4, 0.3];
        // Any fixed μ̂: the penalty over the τ box stays above a finite floor.
        let mut min = f64::INFINITY;
        for i in 0..200 {
            let t = TAU_MIN * (TAU_MAX / TAU_MIN).powf(i as f64 / 199.0);
            min = min.min(mu_prior_penalty(&mu, 2, &g, t).unwrap());
        }
        assert!(min.is_finite());
        assert!(min > -1e6);
    }

    #[test]
    fn predictor_matches_manual_matrix_arithmetic() {
        let params = tiny_model(3);
        let z = [0.4, -1.1];
        let (eta1, eta2) = params.predict_heads(&z).unwrap();
        // Re-evaluate with simple nested loops.
        let mut current: Vec<f64> = z.to_vec();
        let n_layers = params.predictor.layers.len();
        for (li, layer) in params.predictor.layers.iter().enumerate() {
            let mut next = alloc::vec![0.0; layer.out_dim];
            for i in 0..layer.out_dim {
                let mut acc = layer.biases[i];
                for j in 0..layer.in_dim {
                    acc += layer.weights[i * layer.in_dim + j] * current[j];
                }
                next[i] = if li + 1 < n_layers { acc.max(0.0) } else { acc };
            }
            current = next;
        }
        assert_abs_diff_eq!(eta1, current[0], epsilon = 1e-12);
        assert_abs_diff_eq!(eta2, current[1], epsilon = 1e-12);
    }

    #[test]
    fn predictor_zero_weights_yield_biases() {
        let mut params = tiny_model(4);
        params.predictor = Mlp::zeros(&[2, 3, 2], Activation::Identity);
        params.predictor.layers[1].biases = alloc::vec![0.6, -0.9];
        let (eta1, eta2) = params.predict_heads(&[5.0, -7.0]).unwrap();
        assert_eq!((eta1, eta2), (0.6, -0.9));
    }

    #[test]
    fn elbo_lambda_zero_excludes_reconstruction() {
        let mut params = tiny_model(5);
        params.recon_weight = 0.0;
        let data = tiny_dataset();
        let g = path3();
        let idx = [0, 1, 2, 3];
        let eps = eps_for(5, 4, 2);
        let (loss, bd) = params.elbo_batch(&data, &idx, &eps, &g).unwrap();
        assert_relative_eq!(
            loss,
            -bd.recon_y + bd.kl_z + bd.kl_mu,
            max_relative = 1e-12
        );
        assert!(bd.recon_x.is_finite());
    }

    #[test]
    fn elbo_duplicated_batch_doubles_data_terms() {
        let params = tiny_model(6);
        let data = tiny_dataset();
        let g = path3();
        let eps = eps_for(6, 2, 2);
        let (_, bd1) = params.elbo_batch(&data, &[0, 1], &eps, &g).unwrap();
        let mut eps2 = eps.clone();
        eps2.extend_from_slice(&eps);
        let (_, bd2) = params.elbo_batch(&data, &[0, 1, 0, 1], &eps2, &g).unwrap();
        assert_relative_eq!(bd2.recon_y, 2.0 * bd1.recon_y, max_relative = 1e-12);
        assert_relative_eq!(bd2.recon_x, 2.0 * bd1.recon_x, max_relative = 1e-12);
        assert_relative_eq!(bd2.kl_z, 2.0 * bd1.kl_z, max_relative = 1e-12);
        assert_eq!(bd2.kl_mu, bd1.kl_mu);
    }

    #[test]
    fn elbo_gradient_matches_finite_differences() {
        let mut params = tiny_model(7);
        // Move the scalars and table off their init values so every block
        // has a nontrivial gradient.
        params.raw_tau = 0.3;
        params.raw_alpha = 0.2;
        for (i, m) in params.mu_table.iter_mut().enumerate() {
            *m = 0.1 * (i as f64 + 1.0);
        }
        let data = tiny_dataset();
        let g = path3();
        let idx = [0, 1, 2, 3];
        let eps = eps_for(7, 4, 2);
        let ds = 0.25;
        let ps = 1.0 / 3.0;
        let (_, _, grads) = params
            .elbo_batch_grad(&data, &idx, &eps, &g, ds, ps)
            .unwrap();
        let flat_g = grads.to_flat();
        let flat_p = params.to_flat();
        assert_eq!(flat_g.len(), flat_p.len());
        let h = 1e-5;
        for ci in 0..flat_p.len() {
            let mut plus = params.clone();
            let mut fp = flat_p.clone();
            fp[ci] += h;
            plus.set_from_flat(&fp).unwrap();
            let (lp, _) = plus.elbo_batch_scaled(&data, &idx, &eps, &g, ds, ps).unwrap();
            let mut minus = params.clone();
            fp[ci] -= 2.0 * h;
            minus.set_from_flat(&fp).unwrap();
            let (lm, _) = minus.elbo_batch_scaled(&data, &idx, &eps, &g, ds, ps).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let an = flat_g[ci];
            if an.abs() < 1e-7 && fd.abs() < 1e-7 {
                continue;
            }
            let layout = params.layout();
            assert_relative_eq!(
                an,
                fd,
                max_relative = 1e-4,
                epsilon = 1e-7,
            );
            let _ = layout;
        }
    }

    #[test]
    fn weighted_kl_gradient_matches_finite_differences() {
        let mut params = tiny_model(7);
        params.raw_tau = 0.3;
        params.raw_alpha = 0.2;
        for (i, m) in params.mu_table.iter_mut().enumerate() {
            *m = 0.1 * (i as f64 + 1.0);
        }
        let data = tiny_dataset();
        let g = path3();
        let idx = [0, 1, 2, 3];
        let eps = eps_for(7, 4, 2);
        let ds = 0.25;
        let ps = 1.0 / 3.0;
        let w = 0.4;
        let (_, _, grads) = params
            .elbo_batch_grad_weighted(&data, &idx, &eps, &g, ds, ps, w)
            .unwrap();
        let flat_g = grads.to_flat();
        let flat_p = params.to_flat();
        let h = 1e-5;
        for ci in 0..flat_p.len() {
            let mut plus = params.clone();
            let mut fp = flat_p.clone();
            fp[ci] += h;
            plus.set_from_flat(&fp).unwrap();
            let (lp, _, _) = plus
                .elbo_batch_grad_weighted(&data, &idx, &eps, &g, ds, ps, w)
                .unwrap();
            let mut minus = params.clone();
            fp[ci] -= 2.0 * h;
            minus.set_from_flat(&fp).unwrap();
            let (lm, _, _) = minus
                .elbo_batch_grad_weighted(&data, &idx, &eps, &g, ds, ps, w)
                .unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let an = flat_g[ci];
            if an.abs() < 1e-7 && fd.abs() < 1e-7 {
                continue;
            }
            assert_relative_eq!(an, fd, max_relative = 1e-4, epsilon = 1e-7);
        }
    }

    #[test]
    fn weighted_kl_at_full_weight_matches_unweighted() {
        let params = tiny_model(12);
        let data = tiny_dataset();
        let g = path3();
        let idx = [0, 2, 3];
        let eps = eps_for(12, 3, 2);
        let (l0, bd0, g0) = params
            .elbo_batch_grad(&data, &idx, &eps, &g, 0.5, 0.2)
            .unwrap();
        let (l1, bd1, g1) = params
            .elbo_batch_grad_weighted(&data, &idx, &eps, &g, 0.5, 0.2, 1.0)
            .unwrap();
        assert_eq!(l0, l1);
        assert_eq!(bd0, bd1);
        assert_eq!(g0.to_flat(), g1.to_flat());
    }

    #[test]
    fn alpha_fixed_nests_independent_probit() {
        let config = ModelConfig {
            alpha_fixed_at_one: true,
            ..tiny_config()
        };
        let mut rng = stream_rng(8, Stream::Init);
        let params = ModelParams::init(config, 3, &mut rng).unwrap();
        assert_eq!(params.alpha(), 1.0);
        let data = tiny_dataset();
        let g = path3();
        let idx = [0, 1, 2, 3];
        let eps = eps_for(8, 4, 2);
        let (_, bd, grads) = params
            .elbo_batch_grad(&data, &idx, &eps, &g, 1.0, 1.0)
            .unwrap();
        assert_eq!(grads.raw_alpha, 0.0);
        // Manual independent Bernoulli-probit log-likelihood.
        let mut manual = 0.0;
        for (t, &i) in idx.iter().enumerate() {
            let enc = params.encode(data.x_row(i)).unwrap();
            let z = reparameterize(&enc, &eps[t * 2..(t + 1) * 2]);
            let (eta1, eta2) = params.predict_heads(&z).unwrap();
            let p1 = probit_marginal(eta1);
            let p2 = probit_marginal(eta2);
            let [y1, y2] = data.y[i];
            let term = |y: u8, p: f64| if y == 1 { p.ln() } else { (1.0 - p).ln() };
            manual += term(y1, p1) + term(y2, p2);
        }
        assert_abs_diff_eq!(bd.recon_y, manual, epsilon = 1e-10);
    }

    #[test]
    fn marginal_consistency_of_cells() {
        let params = tiny_model(9);
        let data = tiny_dataset();
        let alpha = params.alpha();
        for i in 0..data.n() {
            let (p1, p2) = params.marginal_probs_at_mean(data.x_row(i)).unwrap();
            let cells = copula::cell_probs(p1, p2, alpha);
            assert_abs_diff_eq!(cells.p11 + cells.p10, p1, epsilon = 1e-10);
            assert_abs_diff_eq!(cells.p11 + cells.p01, p2, epsilon = 1e-10);
        }
    }

    #[test]
    fn non_finite_loss_names_component() {
        let mut params = tiny_model(10);
        let last = params.decoder.layers.len() - 1;
        params.decoder.layers[last].biases[0] = 1e200;
        let data = tiny_dataset();
        let g = path3();
        let eps = eps_for(10, 1, 2);
        let err = params.elbo_batch(&data, &[0], &eps, &g).unwrap_err();
        assert_eq!(err, ModelError::NonFiniteLoss { component: "recon_x" });
    }

    #[test]
    fn scalar_transforms() {
        let mut params = tiny_model(12);
        params.raw_tau = core::f64::consts::LN_2;
        assert_relative_eq!(params.tau(), 2.0, max_relative = 1e-15);
        // α consistent with its softplus parameterization.
        let a = params.alpha();
        assert_relative_eq!(a, 1.0 + softplus(params.raw_alpha), max_relative = 1e-12);
        assert!((ALPHA_MIN..=ALPHA_MAX).contains(&a));
        // Projection pulls wild values back into the boxes.
        params.raw_tau = 1e9;
        params.raw_alpha = -1e9;
        params.clamp_raw_scalars();
        assert_relative_eq!(params.tau(), TAU_MAX, max_relative = 1e-12);
        assert_relative_eq!(params.alpha(), ALPHA_MIN, max_relative = 1e-9);
        // Init honours alpha_init.
        let p2 = tiny_model(13);
        assert_relative_eq!(p2.alpha(), 1.5, max_relative = 1e-9);
        assert_relative_eq!(p2.tau(), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn flat_round_trip_and_layout() {
        let params = tiny_model(14);
        let flat = params.to_flat();
        assert_eq!(flat.len(), params.param_count());
        assert_eq!(params.layout().len(), flat.len());
        let mut blank = tiny_model(15);
        blank.set_from_flat(&flat).unwrap();
        assert_eq!(blank.to_flat(), flat);
        assert_eq!(blank.trunk, params.trunk);
        assert_eq!(blank.raw_tau, params.raw_tau);
        // Layout names resolve across the whole vector.
        let layout = params.layout();
        assert_eq!(layout.block_of(0), "encoder.hidden0.weights");
        assert_eq!(layout.block_of(flat.len() - 1), "alpha_raw");
        assert_eq!(layout.block_of(flat.len() - 2), "log_tau");
        let err = blank.set_from_flat(&flat[1..]).unwrap_err();
        assert!(matches!(err, ModelError::DimensionMismatch { .. }));
    }

    #[test]
    fn unseen_region_fallback() {
        let mut params = tiny_model(16);
        for (i, m) in params.mu_table.iter_mut().enumerate() {
            *m = i as f64;
        }
        let g = path3();
        params.mark_seen(&[0, 2]);
        // Seen region returns its own row.
        assert_eq!(params.mu_row_resolved(0, &g), alloc::vec![0.0, 1.0]);
        // Unseen region 1 averages its seen neighbours 0 and 2.
        assert_eq!(params.mu_row_resolved(1, &g), alloc::vec![2.0, 3.0]);
        // Out-of-range region falls back to the global seen average.
        assert_eq!(params.mu_row_resolved(7, &g), alloc::vec![2.0, 3.0]);
        // No seen regions at all → zeros.
        let fresh = tiny_model(17);
        assert_eq!(fresh.mu_row_resolved(1, &g), alloc::vec![0.0, 0.0]);
    }

    #[test]
    fn config_validation() {
        let bad = ModelConfig {
            p: 0,
            ..tiny_config()
        };
        assert!(matches!(bad.validate(), Err(ModelError::BadConfig(_))));
        let bad = ModelConfig {
            alpha_init: 0.5,
            ..tiny_config()
        };
        assert!(matches!(bad.validate(), Err(ModelError::BadConfig(_))));
        let bad = ModelConfig {
            tau_init: 0.0,
            ..tiny_config()
        };
        assert!(matches!(bad.validate(), Err(ModelError::BadConfig(_))));
        let bad = ModelConfig {
            encoder_hidden: alloc::vec![4, 0],
            ..tiny_config()
        };
        assert!(matches!(bad.validate(), Err(ModelError::BadConfig(_))));
        let msg = ModelError::BadConfig("latent dimension must be positive").to_string();
        assert!(msg.contains("latent dimension"));
    }
}
