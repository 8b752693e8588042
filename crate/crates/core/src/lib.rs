//! Spatially regularized variational autoencoder with a bivariate
//! Gumbel-copula likelihood for paired binary outcomes.
//!
//! The crate implements the complete modelling stack as plain `f64` numerics:
//!
//! * [`graph`] — region adjacency, the conditional-autoregressive precision
//!   `Q = D − ρA`, and exact Gaussian Markov random field sampling;
//! * [`copula`] — bivariate Gumbel copula: CDF, joint Bernoulli cell
//!   probabilities, dependence summaries, exact sampling, and the analytic
//!   partial derivatives used in training;
//! * [`nn`] — dense feed-forward layers with explicit forward caches,
//!   reverse-mode gradients, and the Adam update;
//! * [`model`] — encoder/decoder/predictor assembly, reparameterization,
//!   probit marginals, KL terms, and the weighted evidence lower bound with
//!   full parameter gradients;
//! * [`train`] — standardization-aware splitting, the mini-batch training
//!   loop with early stopping, and the ablation-grid runner;
//! * [`infer`] — posterior predictive joint/marginal/conditional
//!   probabilities, per-region tables, and bootstrap average-covariate-effect
//!   estimates;
//! * [`sim`] — the synthetic-data generator used for benchmarks and oracle
//!   tests;
//! * [`baseline`] — logistic and independent-network baselines plus the AUC
//!   and summary metrics;
//! * [`rng`] — named, independent random substreams derived from one seed.
//!
//! Everything is deterministic given a seed: identical inputs produce
//! bit-identical outputs on every run. The crate is `no_std` (with `alloc`)
//! so the numerics can be embedded anywhere; file formats and the command-line
//! interface live in the companion `scvae-cli` crate.

#![no_std]
#![deny(unsafe_code)]
#![warn(missing_docs)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod baseline;
pub mod copula;
pub mod data;
pub mod graph;
pub mod infer;
mod linalg;
pub mod model;
pub mod nn;
pub mod rng;
pub mod sim;
pub mod train;
