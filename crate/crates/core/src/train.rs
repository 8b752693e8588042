//! Training loop and experiment orchestration: train/test splitting with
//! whole-region holdout, per-column standardization fitted on the training
//! split, shuffled mini-batch optimization with Adam and early stopping on
//! a fixed-noise validation slice, and a grid runner that fits every model
//! variant across configuration cells and seeds.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
// Required for float math in no_std builds; when a dependency links std,
// method calls resolve to the inherent f64 methods instead.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::baseline::{auc, fit_independent_nn, fit_logistic, BaselineError, Variant};
use crate::data::Dataset;
use crate::graph::SpatialGraph;
use crate::model::{ElboBreakdown, ModelConfig, ModelError, ModelParams};
use crate::nn::{AdamConfig, AdamState, NnError};
use crate::rng::{stream_rng, Stream};
use crate::sim::{self, SimConfig};

/// Errors from splitting and training.
#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    /// The training configuration is internally inconsistent.
    #[error("invalid training configuration: {0}")]
    BadConfig(&'static str),
    /// Too few observations to split.
    #[error("need at least {required} observations, got {got}")]
    TooFewObservations {
        /// Minimum required.
        required: usize,
        /// Actually available.
        got: usize,
    },
    /// The requested whole-region holdout would exhaust the data.
    #[error("cannot hold out {requested} regions: only {present} are present in the data")]
    TooFewRegions {
        /// Regions requested for holdout.
        requested: usize,
        /// Distinct regions present.
        present: usize,
    },
    /// Validation loss exploded relative to its initial value.
    #[error("diverged at epoch {epoch}: validation loss {validation} exceeds {limit}")]
    Diverged {
        /// Epoch at which the blow-up was detected.
        epoch: usize,
        /// Observed validation loss.
        validation: f64,
        /// The divergence threshold.
        limit: f64,
    },
    /// Model-level failure.
    #[error(transparent)]
    Model(#[from] ModelError),
    /// Optimizer-level failure.
    #[error(transparent)]
    Nn(#[from] NnError),
    /// Baseline-model failure.
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

/// Knobs of the optimization loop.
#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    /// Mini-batch size.
    pub batch_size: usize,
    /// Epoch budget (0 returns the initialized model untouched).
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Fraction of the training data held aside for validation.
    pub validation_fraction: f64,
    /// Adam step size.
    pub learning_rate: f64,
    /// Master seed; all randomness (init, shuffles, noise draws) flows from
    /// named sub-streams of this value.
    pub seed: u64,
    /// Overrides the model's reconstruction weight λ when set.
    pub recon_weight: Option<f64>,
    /// Observation fraction for the train side of [`split`].
    pub train_fraction: f64,
    /// Whole regions to hold out in [`split`]; default 5% of the region
    /// count, at least 1.
    pub holdout_regions: Option<usize>,
    /// Epochs trained with the reparameterization noise and the latent-KL
    /// weight held at 0 (0 disables warm-up entirely). The unit-variance
    /// posterior at initialization otherwise drowns the latent signal, the
    /// predictor unlearns its latent inputs, and encoder dimensions freeze
    /// at the prior; the hold phase first trains a deterministic
    /// autoencoder with supervised heads. Validation always scores the
    /// full objective with unscaled noise, and early stopping starts
    /// counting after the hold and ramp finish.
    pub warmup_epochs: usize,
    /// Epochs over which the noise/KL weight then ramps linearly from 0
    /// to 1 after the hold phase (ignored when `warmup_epochs` is 0; a
    /// value of 0 steps straight to full weight).
    pub warmup_ramp_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            max_epochs: 300,
            patience: 20,
            validation_fraction: 0.1,
            learning_rate: 1e-3,
            seed: 0,
            recon_weight: None,
            train_fraction: 0.8,
            holdout_regions: None,
            warmup_epochs: 0,
            warmup_ramp_epochs: 25,
        }
    }
}

impl TrainConfig {
    pub(crate) fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::BadConfig("batch size must be positive"));
        }
        if self.patience == 0 {
            return Err(TrainError::BadConfig("patience must be positive"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(TrainError::BadConfig("validation fraction must be in (0,1)"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::BadConfig("learning rate must be positive"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(TrainError::BadConfig("train fraction must be in (0,1)"));
        }
        Ok(())
    }
}

/// One history row per completed epoch; all data components are per-fit-
/// observation means, the penalty is spread over the same denominator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryRow {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Training objective assembled from the component means.
    pub loss: f64,
    /// Mean outcome log-likelihood.
    pub recon_y: f64,
    /// Mean covariate reconstruction log-likelihood.
    pub recon_x: f64,
    /// Mean latent KL.
    pub kl_z: f64,
    /// Region-prior penalty per fit observation, at epoch end.
    pub kl_mu: f64,
    /// τ at epoch end.
    pub tau: f64,
    /// α at epoch end.
    pub alpha: f64,
}

/// Training trajectory summary.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    /// One row per completed epoch.
    pub rows: Vec<HistoryRow>,
    /// The last epoch that ran (0 when max_epochs = 0).
    pub stopped_epoch: usize,
    /// Best validation loss seen (NaN when validation never ran).
    pub best_validation_loss: f64,
}

/// In-place Fisher–Yates shuffle.
pub(crate) fn shuffle<T, R: Rng>(v: &mut [T], rng: &mut R) {
    for i in (1..v.len()).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
}

pub(crate) fn draw_normals<R: Rng>(rng: &mut R, count: usize) -> Vec<f64> {
    (0..count)
        .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect()
}

/// Splits observations into train and test. A configurable number of whole
/// regions goes entirely to test (so test contains unseen locations); the
/// remaining observations are split uniformly, targeting
/// `round(train_fraction · n)` training rows. Standardization is fitted on
/// the training split and applied to both sides.
pub fn split<R: Rng>(
    data: &Dataset,
    train_fraction: f64,
    holdout_regions: Option<usize>,
    rng: &mut R,
) -> Result<(Dataset, Dataset), TrainError> {
    if data.n() < 10 {
        return Err(TrainError::TooFewObservations {
            required: 10,
            got: data.n(),
        });
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(TrainError::BadConfig("train fraction must be in (0,1)"));
    }
    let mut present: Vec<usize> = {
        let mut seen = vec![false; data.n_regions];
        for &r in &data.region {
            seen[r] = true;
        }
        (0..data.n_regions).filter(|&j| seen[j]).collect()
    };
    let holdout = holdout_regions.unwrap_or_else(|| {
        ((data.n_regions as f64) * 0.05).round().max(1.0) as usize
    });
    if holdout >= present.len() {
        return Err(TrainError::TooFewRegions {
            requested: holdout,
            present: present.len(),
        });
    }
    shuffle(&mut present, rng);
    let mut held = vec![false; data.n_regions];
    for &r in &present[..holdout] {
        held[r] = true;
    }

    let mut candidates: Vec<usize> = Vec::new();
    let mut test_idx: Vec<usize> = Vec::new();
    for i in 0..data.n() {
        if held[data.region[i]] {
            test_idx.push(i);
        } else {
            candidates.push(i);
        }
    }
    if candidates.is_empty() {
        return Err(TrainError::TooFewRegions {
            requested: holdout,
            present: present.len(),
        });
    }
    shuffle(&mut candidates, rng);
    let target = ((data.n() as f64) * train_fraction).round() as usize;
    let take = target.clamp(1, candidates.len());
    let mut train_idx: Vec<usize> = candidates[..take].to_vec();
    let mut rest: Vec<usize> = candidates[take..].to_vec();
    test_idx.append(&mut rest);
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let mut train = data.subset(&train_idx);
    let mut test = data.subset(&test_idx);
    let st = train.standardize_in_place();
    test.apply_standardization(&st);
    Ok((train, test))
}

/// Fits the model on (already standardized) training data: shuffled
/// mini-batches, Adam with the analytic gradients, scalar projection after
/// each step, and early stopping on a validation slice whose noise draws
/// are frozen up front so epoch-to-epoch comparisons are exact.
pub fn fit(
    train: &Dataset,
    graph: &SpatialGraph,
    model_config: &ModelConfig,
    tc: &TrainConfig,
) -> Result<(ModelParams, TrainHistory), TrainError> {
    tc.validate()?;
    let mut init_rng = stream_rng(tc.seed, Stream::Init);
    let mut params = ModelParams::init(model_config.clone(), graph.len(), &mut init_rng)?;
    if let Some(w) = tc.recon_weight {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(TrainError::BadConfig("reconstruction weight must be ≥ 0"));
        }
        params.recon_weight = w;
    }
    params.mark_seen(&train.region);
    if tc.max_epochs == 0 {
        return Ok((params, TrainHistory::default()));
    }
    if train.n() < 2 {
        return Err(TrainError::TooFewObservations {
            required: 2,
            got: train.n(),
        });
    }

    let d = model_config.d;
    let mut split_rng = stream_rng(tc.seed, Stream::Split);
    let mut order: Vec<usize> = (0..train.n()).collect();
    shuffle(&mut order, &mut split_rng);
    let mut val_count = ((train.n() as f64) * tc.validation_fraction).round() as usize;
    val_count = val_count.clamp(1, train.n() - 1);
    let val_idx: Vec<usize> = order[..val_count].to_vec();
    let mut fit_idx: Vec<usize> = order[val_count..].to_vec();
    let n_fit = fit_idx.len();

    let mut eps_rng = stream_rng(tc.seed, Stream::Eps);
    let val_eps = draw_normals(&mut eps_rng, val_count * d);
    let pen_scale = 1.0 / n_fit as f64;
    let val_scale = 1.0 / val_count as f64;

    let layout = params.layout();
    let mut adam = AdamState::new(
        layout.len(),
        AdamConfig {
            learning_rate: tc.learning_rate,
            ..AdamConfig::default()
        },
    );

    let (val0, _) =
        params.elbo_batch_scaled(train, &val_idx, &val_eps, graph, val_scale, pen_scale)?;
    let limit = 10.0 * val0.abs().max(1.0);
    let mut best_val = val0;
    let mut best_params = params.clone();
    let mut bad_epochs = 0usize;
    let mut rows = Vec::new();
    let mut stopped = 0usize;

    for epoch in 1..=tc.max_epochs {
        let warm = if tc.warmup_epochs == 0 {
            1.0
        } else if epoch <= tc.warmup_epochs {
            0.0
        } else if tc.warmup_ramp_epochs == 0 {
            1.0
        } else {
            (((epoch - tc.warmup_epochs) as f64) / (tc.warmup_ramp_epochs as f64)).min(1.0)
        };
        shuffle(&mut fit_idx, &mut split_rng);
        let mut sums = ElboBreakdown::default();
        for chunk in fit_idx.chunks(tc.batch_size) {
            let mut eps = draw_normals(&mut eps_rng, chunk.len() * d);
            if warm < 1.0 {
                for e in &mut eps {
                    *e *= warm;
                }
            }
            let ds = 1.0 / chunk.len() as f64;
            let (_, bd, grads) =
                params.elbo_batch_grad_weighted(train, chunk, &eps, graph, ds, pen_scale, warm)?;
            sums.recon_y += bd.recon_y;
            sums.recon_x += bd.recon_x;
            sums.kl_z += bd.kl_z;
            let mut flat = params.to_flat();
            adam.step(&mut flat, &grads.to_flat(), &layout)?;
            params.set_from_flat(&flat)?;
            params.clamp_raw_scalars();
        }
        let recon_y = sums.recon_y / n_fit as f64;
        let recon_x = sums.recon_x / n_fit as f64;
        let kl = sums.kl_z / n_fit as f64;
        let kl_mu = params.penalty(graph)? / n_fit as f64;
        rows.push(HistoryRow {
            epoch,
            loss: -recon_y - params.recon_weight * recon_x + kl + kl_mu,
            recon_y,
            recon_x,
            kl_z: kl,
            kl_mu,
            tau: params.tau(),
            alpha: params.alpha(),
        });
        stopped = epoch;

        let (val, _) =
            params.elbo_batch_scaled(train, &val_idx, &val_eps, graph, val_scale, pen_scale)?;
        if val > limit {
            return Err(TrainError::Diverged {
                epoch,
                validation: val,
                limit,
            });
        }
        if val < best_val {
            best_val = val;
            best_params = params.clone();
            bad_epochs = 0;
        } else if epoch > tc.warmup_epochs + tc.warmup_ramp_epochs || tc.warmup_epochs == 0 {
            bad_epochs += 1;
            if bad_epochs >= tc.patience {
                break;
            }
        }
    }

    Ok((
        best_params,
        TrainHistory {
            rows,
            stopped_epoch: stopped,
            best_validation_loss: best_val,
        },
    ))
}

/// The sweep over configuration cells, seeds, and model variants.
#[derive(Clone, Debug)]
pub struct AblationGrid {
    /// Reconstruction weights to sweep (empty → the base model's value).
    pub lambda: Vec<f64>,
    /// Sample sizes to sweep (empty → the base simulation's value).
    pub n: Vec<usize>,
    /// True dependence parameters to sweep (empty → base value).
    pub alpha: Vec<f64>,
    /// Covariate perturbation variances to sweep (empty → base value).
    pub noise: Vec<f64>,
    /// Seeds; every cell runs once per seed.
    pub seeds: Vec<u64>,
    /// Model variants to fit per cell and seed.
    pub variants: Vec<Variant>,
    /// Template simulation configuration.
    pub sim_base: SimConfig,
    /// Template model configuration (the copula variant's settings).
    pub model_base: ModelConfig,
    /// Template training configuration.
    pub train_base: TrainConfig,
}

/// One result row: a (cell, variant, seed) triple with test AUCs and the
/// fitted dependence parameters where the variant has them. `error` is set
/// (and the metrics are absent) when that fit failed; the grid continues.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    /// Cell identifier, e.g. `alpha=2;lambda=1;n=5000;noise=0`.
    pub cell_id: String,
    /// Variant tag.
    pub variant: String,
    /// Seed used for data, split, and fit.
    pub seed: u64,
    /// Test AUC on outcome 1.
    pub auc_y1: Option<f64>,
    /// Test AUC on outcome 2.
    pub auc_y2: Option<f64>,
    /// Fitted dependence parameter, for the model variants that carry one.
    pub alpha_hat: Option<f64>,
    /// Fitted precision, for the model variants that carry one.
    pub tau_hat: Option<f64>,
    /// Wall-clock seconds for this fit + evaluation.
    pub seconds: f64,
    /// Failure description when the fit did not complete.
    pub error: Option<String>,
}

fn variant_metrics(
    variant: Variant,
    train: &Dataset,
    test: &Dataset,
    graph: &SpatialGraph,
    lambda: f64,
    model_base: &ModelConfig,
    tc: &TrainConfig,
) -> Result<(f64, f64, Option<f64>, Option<f64>), TrainError> {
    let n_test = test.n();
    let mut s1 = Vec::with_capacity(n_test);
    let mut s2 = Vec::with_capacity(n_test);
    let (alpha_hat, tau_hat) = match variant {
        Variant::Logistic => {
            let f1 = fit_logistic(train, 0, 500)?;
            let f2 = fit_logistic(train, 1, 500)?;
            for i in 0..n_test {
                s1.push(f1.predict(test.x_row(i)));
                s2.push(f2.predict(test.x_row(i)));
            }
            (None, None)
        }
        Variant::IndependentNn => {
            let net = fit_independent_nn(train, &model_base.predictor_hidden, tc)?;
            for i in 0..n_test {
                let (p1, p2) = net.predict(test.x_row(i))?;
                s1.push(p1);
                s2.push(p2);
            }
            (None, None)
        }
        Variant::VaeNoCopula | Variant::VaeCopula => {
            let mut mc = model_base.clone();
            mc.recon_weight_init = lambda;
            mc.alpha_fixed_at_one = variant == Variant::VaeNoCopula;
            let (params, _) = fit(train, graph, &mc, tc)?;
            for i in 0..n_test {
                let (p1, p2) = params.marginal_probs_at_mean(test.x_row(i))?;
                s1.push(p1);
                s2.push(p2);
            }
            (Some(params.alpha()), Some(params.tau()))
        }
    };
    let l1: Vec<u8> = test.y.iter().map(|y| y[0]).collect();
    let l2: Vec<u8> = test.y.iter().map(|y| y[1]).collect();
    let a1 = auc(&s1, &l1).map_err(|_| TrainError::BadConfig("single-class test outcome 1"))?;
    let a2 = auc(&s2, &l2).map_err(|_| TrainError::BadConfig("single-class test outcome 2"))?;
    Ok((a1, a2, alpha_hat, tau_hat))
}

/// Runs every (cell, seed, variant) combination serially in grid order.
/// `clock` supplies the current time in seconds (injected so the core stays
/// clock-free and tests stay deterministic). Failures are recorded per row;
/// the sweep always completes.
pub fn run_ablation(grid: &AblationGrid, clock: &mut dyn FnMut() -> f64) -> Vec<AblationRow> {
    let lambdas = if grid.lambda.is_empty() {
        vec![grid.model_base.recon_weight_init]
    } else {
        grid.lambda.clone()
    };
    let ns = if grid.n.is_empty() {
        vec![grid.sim_base.n]
    } else {
        grid.n.clone()
    };
    let alphas = if grid.alpha.is_empty() {
        vec![grid.sim_base.alpha_true]
    } else {
        grid.alpha.clone()
    };
    let noises = if grid.noise.is_empty() {
        vec![grid.sim_base.noise_sigma2]
    } else {
        grid.noise.clone()
    };

    let mut rows = Vec::new();
    for &lambda in &lambdas {
        for &n in &ns {
            for &alpha in &alphas {
                for &noise in &noises {
                    let cell_id =
                        format!("alpha={alpha};lambda={lambda};n={n};noise={noise}");
                    for &seed in &grid.seeds {
                        let mut sim_config = grid.sim_base.clone();
                        sim_config.n = n;
                        sim_config.alpha_true = alpha;
                        sim_config.noise_sigma2 = noise;
                        sim_config.seed = seed;
                        let prepared = sim::generate(&sim_config)
                            .map_err(|e| e.to_string())
                            .and_then(|(data, truth)| {
                                let mut rng = stream_rng(seed, Stream::Split);
                                split(
                                    &data,
                                    grid.train_base.train_fraction,
                                    grid.train_base.holdout_regions,
                                    &mut rng,
                                )
                                .map(|(tr, te)| (tr, te, truth.graph))
                                .map_err(|e| e.to_string())
                            });
                        for &variant in &grid.variants {
                            let start = clock();
                            let mut tc = grid.train_base.clone();
                            tc.seed = seed;
                            let outcome = prepared.as_ref().map_err(Clone::clone).and_then(
                                |(train, test, graph)| {
                                    variant_metrics(
                                        variant,
                                        train,
                                        test,
                                        graph,
                                        lambda,
                                        &grid.model_base,
                                        &tc,
                                    )
                                    .map_err(|e| e.to_string())
                                },
                            );
                            let seconds = clock() - start;
                            let row = match outcome {
                                Ok((a1, a2, ah, th)) => AblationRow {
                                    cell_id: cell_id.clone(),
                                    variant: variant.as_str().to_string(),
                                    seed,
                                    auc_y1: Some(a1),
                                    auc_y2: Some(a2),
                                    alpha_hat: ah,
                                    tau_hat: th,
                                    seconds,
                                    error: None,
                                },
                                Err(message) => AblationRow {
                                    cell_id: cell_id.clone(),
                                    variant: variant.as_str().to_string(),
                                    seed,
                                    auc_y1: None,
                                    auc_y2: None,
                                    alpha_hat: None,
                                    tau_hat: None,
                                    seconds,
                                    error: Some(message),
                                },
                            };
                            rows.push(row);
                        }
                    }
                }
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::GraphSpec;
    use approx::assert_abs_diff_eq;

    fn sim_small(n: usize, seed: u64) -> (Dataset, SpatialGraph) {
        let config = SimConfig {
            n,
            d: 2,
            p: 4,
            rho: 0.9,
            alpha_true: 2.0,
            sigma2_z: 1.0,
            sigma2_x: 1.0,
            noise_sigma2: 0.0,
            seed,
            graph: GraphSpec::Grid { rows: 2, cols: 2 },
        };
        let (data, truth) = sim::generate(&config).unwrap();
        (data, truth.graph)
    }

    fn small_model_config() -> ModelConfig {
        ModelConfig {
            p: 4,
            d: 2,
            encoder_hidden: alloc::vec![8],
            decoder_hidden: alloc::vec![8],
            predictor_hidden: alloc::vec![4],
            recon_weight_init: 1.0,
            tau_init: 1.0,
            alpha_init: 1.5,
            prior_z_variance: 1.0,
            alpha_fixed_at_one: false,
        }
    }

    #[test]
    fn split_partition_and_standardization() {
        let (data, _) = sim_small(100, 1);
        let mut rng = stream_rng(1, Stream::Split);
        let (train, test) = split(&data, 0.8, Some(1), &mut rng).unwrap();
        assert_eq!(train.n() + test.n(), 100);
        assert!(train.n() <= 80);
        // Held-out regions never appear in train; some do appear in test.
        let train_regions: Vec<bool> = {
            let mut seen = alloc::vec![false; 4];
            for &r in &train.region {
                seen[r] = true;
            }
            seen
        };
        let holdout_count = (0..4)
            .filter(|&j| !train_regions[j] && test.region.contains(&j))
            .count();
        assert!(holdout_count >= 1);
        // Training columns are standardized; test uses the same transform.
        let p = train.p();
        for j in 0..p {
            let col: Vec<f64> = (0..train.n()).map(|i| train.x_row(i)[j]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (col.len() - 1) as f64)
                .sqrt();
            assert!(mean.abs() < 1e-8, "column {j} mean {mean}");
            assert!((sd - 1.0).abs() < 1e-8, "column {j} sd {sd}");
        }
        assert_eq!(train.standardization, test.standardization);
        // Same seed → identical split.
        let mut rng2 = stream_rng(1, Stream::Split);
        let (train2, test2) = split(&data, 0.8, Some(1), &mut rng2).unwrap();
        assert_eq!(train.x, train2.x);
        assert_eq!(test.y, test2.y);
    }

    #[test]
    fn split_rejections() {
        let (data, _) = sim_small(100, 2);
        let mut rng = stream_rng(2, Stream::Split);
        // All four regions present; holding out 4 leaves nothing to train on.
        assert!(matches!(
            split(&data, 0.8, Some(4), &mut rng),
            Err(TrainError::TooFewRegions {
                requested: 4,
                present: 4
            })
        ));
        let tiny = data.subset(&[0, 1, 2]);
        assert!(matches!(
            split(&tiny, 0.8, Some(1), &mut rng),
            Err(TrainError::TooFewObservations { required: 10, .. })
        ));
    }

    #[test]
    fn standardization_idempotent_via_stored_stats() {
        let (data, _) = sim_small(50, 3);
        let mut rng = stream_rng(3, Stream::Split);
        let (train, _) = split(&data, 0.8, Some(1), &mut rng).unwrap();
        let st = train.standardization.clone().unwrap();
        // Re-deriving statistics from already-standardized data gives the
        // identity transform.
        let st2 = crate::data::Standardization::fit(&train.x, train.n(), train.p());
        for j in 0..train.p() {
            assert!(st2.mean[j].abs() < 1e-8);
            assert!((st2.sd[j] - 1.0).abs() < 1e-8);
        }
        let _ = st;
    }

    #[test]
    fn fit_zero_epochs_returns_init() {
        let (data, graph) = sim_small(60, 4);
        let mut rng = stream_rng(4, Stream::Split);
        let (train, _) = split(&data, 0.8, Some(1), &mut rng).unwrap();
        let tc = TrainConfig {
            max_epochs: 0,
            seed: 4,
            ..TrainConfig::default()
        };
        let (params, history) = fit(&train, &graph, &small_model_config(), &tc).unwrap();
        assert!(history.rows.is_empty());
        assert_eq!(history.stopped_epoch, 0);
        // Same init as drawing directly from the init stream.
        let mut init_rng = stream_rng(4, Stream::Init);
        let direct =
            ModelParams::init(small_model_config(), graph.len(), &mut init_rng).unwrap();
        assert_eq!(params.to_flat(), direct.to_flat());
    }

    #[test]
    fn fit_is_deterministic_and_loss_decreases() {
        let (data, graph) = sim_small(240, 5);
        let mut rng = stream_rng(5, Stream::Split);
        let (train, _) = split(&data, 0.8, Some(1), &mut rng).unwrap();
        let tc = TrainConfig {
            batch_size: 64,
            max_epochs: 25,
            patience: 25,
            seed: 5,
            ..TrainConfig::default()
        };
        let (p1, h1) = fit(&train, &graph, &small_model_config(), &tc).unwrap();
        let (p2, h2) = fit(&train, &graph, &small_model_config(), &tc).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(p1.to_flat(), p2.to_flat());
        assert!(!h1.rows.is_empty());
        assert!(h1.rows.len() <= 25);
        let first = h1.rows.first().unwrap().loss;
        let last = h1.rows.last().unwrap().loss;
        assert!(last < first, "loss did not decrease: {first} → {last}");
        // τ and α stay in their boxes throughout.
        for row in &h1.rows {
            assert!(row.tau > 0.0);
            assert!(row.alpha >= 1.0);
        }
        assert!(h1.best_validation_loss.is_finite());
    }

    #[test]
    fn fit_respects_recon_weight_override() {
        let (data, graph) = sim_small(60, 6);
        let mut rng = stream_rng(6, Stream::Split);
        let (train, _) = split(&data, 0.8, Some(1), &mut rng).unwrap();
        let tc = TrainConfig {
            max_epochs: 0,
            recon_weight: Some(0.25),
            seed: 6,
            ..TrainConfig::default()
        };
        let (params, _) = fit(&train, &graph, &small_model_config(), &tc).unwrap();
        assert_abs_diff_eq!(params.recon_weight, 0.25);
    }

    #[test]
    fn fit_config_rejections() {
        let (data, graph) = sim_small(60, 7);
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            fit(&data, &graph, &small_model_config(), &bad),
            Err(TrainError::BadConfig(_))
        ));
        let bad = TrainConfig {
            validation_fraction: 1.5,
            ..TrainConfig::default()
        };
        assert!(matches!(
            fit(&data, &graph, &small_model_config(), &bad),
            Err(TrainError::BadConfig(_))
        ));
    }

    #[test]
    fn ablation_row_bookkeeping() {
        let grid = AblationGrid {
            lambda: alloc::vec![],
            n: alloc::vec![60],
            alpha: alloc::vec![],
            noise: alloc::vec![],
            seeds: alloc::vec![1, 2],
            variants: alloc::vec![Variant::Logistic, Variant::VaeCopula],
            sim_base: SimConfig {
                n: 60,
                d: 2,
                p: 4,
                rho: 0.9,
                alpha_true: 2.0,
                sigma2_z: 1.0,
                sigma2_x: 1.0,
                noise_sigma2: 0.0,
                seed: 0,
                graph: GraphSpec::Grid { rows: 2, cols: 2 },
            },
            model_base: small_model_config(),
            train_base: TrainConfig {
                max_epochs: 2,
                batch_size: 32,
                ..TrainConfig::default()
            },
        };
        let mut ticks = 0.0;
        let mut clock = move || {
            ticks += 0.5;
            ticks
        };
        let rows = run_ablation(&grid, &mut clock);
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].cell_id, "alpha=2;lambda=1;n=60;noise=0");
        assert_eq!(rows[0].variant, "logistic");
        assert_eq!(rows[0].seed, 1);
        assert_eq!(rows[1].variant, "vae_copula");
        assert_eq!(rows[2].seed, 2);
        for row in &rows {
            assert!(row.error.is_none(), "unexpected failure: {:?}", row.error);
            assert!(row.auc_y1.unwrap() > 0.0 && row.auc_y1.unwrap() < 1.0);
            assert!(row.seconds > 0.0);
        }
        assert!(rows[0].alpha_hat.is_none());
        assert!(rows[1].alpha_hat.is_some());
        assert!(rows[1].tau_hat.unwrap() > 0.0);
    }

    #[test]
    fn ablation_empty_seeds_or_variants() {
        let base = AblationGrid {
            lambda: alloc::vec![0.5],
            n: alloc::vec![60],
            alpha: alloc::vec![],
            noise: alloc::vec![],
            seeds: alloc::vec![],
            variants: alloc::vec![Variant::Logistic],
            sim_base: SimConfig {
                n: 60,
                d: 2,
                p: 4,
                rho: 0.9,
                alpha_true: 2.0,
                sigma2_z: 1.0,
                sigma2_x: 1.0,
                noise_sigma2: 0.0,
                seed: 0,
                graph: GraphSpec::Grid { rows: 2, cols: 2 },
            },
            model_base: small_model_config(),
            train_base: TrainConfig::default(),
        };
        let mut clock = || 0.0;
        assert!(run_ablation(&base, &mut clock).is_empty());
        let mut no_variants = base.clone();
        no_variants.seeds = alloc::vec![1];
        no_variants.variants = alloc::vec![];
        assert!(run_ablation(&no_variants, &mut clock).is_empty());
    }

    #[test]
    fn ablation_records_failures_and_continues() {
        let mut bad_model = small_model_config();
        bad_model.tau_init = -1.0; // invalid: VAE fits must fail
        let grid = AblationGrid {
            lambda: alloc::vec![],
            n: alloc::vec![60],
            alpha: alloc::vec![],
            noise: alloc::vec![],
            seeds: alloc::vec![1],
            variants: alloc::vec![Variant::VaeCopula, Variant::Logistic],
            sim_base: SimConfig {
                n: 60,
                d: 2,
                p: 4,
                rho: 0.9,
                alpha_true: 2.0,
                sigma2_z: 1.0,
                sigma2_x: 1.0,
                noise_sigma2: 0.0,
                seed: 0,
                graph: GraphSpec::Grid { rows: 2, cols: 2 },
            },
            model_base: bad_model,
            train_base: TrainConfig {
                max_epochs: 1,
                ..TrainConfig::default()
            },
        };
        let mut clock = || 0.0;
        let rows = run_ablation(&grid, &mut clock);
        assert_eq!(rows.len(), 2);
        assert!(rows[0].error.is_some());
        assert!(rows[0].auc_y1.is_none());
        // The grid keeps going: the logistic fit succeeds.
        assert!(rows[1].error.is_none());
        assert!(rows[1].auc_y1.is_some());
    }
}
