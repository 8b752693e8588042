//! Posterior-predictive inference on a fitted model: Monte Carlo joint,
//! marginal, and conditional outcome probabilities per observation,
//! per-region aggregation for map tables, and average covariate effects
//! (ACE) with nonparametric bootstrap intervals.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use thiserror::Error;

use crate::baseline::quantile;
use crate::copula::{cell_probs, CellProbs};
use crate::data::Dataset;
use crate::graph::SpatialGraph;
use crate::model::{probit_marginal, reparameterize, ModelConfig, ModelError, ModelParams};
use crate::rng::{stream_rng, Stream};
use crate::train::{draw_normals, fit, TrainConfig, TrainError};

/// Minimum bootstrap replicate count for percentile intervals.
pub const MIN_BOOTSTRAP: usize = 100;

/// Two-sided 95% standard-normal critical value.
const Z_95: f64 = 1.959_963_984_540_054;

/// Errors from prediction and effect estimation.
#[derive(Debug, Error, PartialEq)]
pub enum InferError {
    /// Monte Carlo sample count must be at least 1.
    #[error("sample count must be at least 1")]
    BadSampleCount,
    /// Percentile intervals need a minimal replicate count.
    #[error("bootstrap count {requested} is below the minimum {minimum}")]
    BootstrapTooSmall {
        /// Replicates requested.
        requested: usize,
        /// Smallest allowed value.
        minimum: usize,
    },
    /// The named covariate is not a column of the data.
    #[error("unknown covariate column `{0}`")]
    UnknownColumn(String),
    /// The region index exceeds the model's region count.
    #[error("region {region} out of range: model has {n_regions} regions")]
    UnknownRegion {
        /// Offending index.
        region: usize,
        /// Regions known to the model.
        n_regions: usize,
    },
    /// Outcome pattern entries must be 0 or 1.
    #[error("outcome pattern entries must be 0 or 1")]
    BadPattern,
    /// An effect curve needs at least one grid value.
    #[error("effect curve needs a nonempty grid")]
    EmptyGrid,
    /// The refit interval needs at least one refit.
    #[error("refit count must be at least 1")]
    BadRefitCount,
    /// A model refit inside the interval bootstrap failed.
    #[error("refit inside the effect bootstrap failed: {0}")]
    RefitFailed(#[from] TrainError),
    /// Model-level failure.
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Monte Carlo posterior-predictive summary for one observation: the four
/// joint cells, both marginals, and the four conditionals, all derived from
/// cell probabilities averaged over `samples` latent draws.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointPrediction {
    /// Averaged joint cell probabilities.
    pub cells: CellProbs,
    /// P(Y₁=1).
    pub p1: f64,
    /// P(Y₂=1).
    pub p2: f64,
    /// P(Y₁=1 | Y₂=1).
    pub c1_given_2: f64,
    /// P(Y₂=1 | Y₁=1).
    pub c2_given_1: f64,
    /// P(Y₁=1 | Y₂=0).
    pub c1_given_not2: f64,
    /// P(Y₂=1 | Y₁=0).
    pub c2_given_not1: f64,
    /// Latent draws averaged over.
    pub samples: usize,
}

fn finish_prediction(cells: CellProbs, samples: usize) -> JointPrediction {
    let p1 = cells.marginal1();
    let p2 = cells.marginal2();
    // Cells are floored below at strictly positive values, so every
    // conditioning event has positive probability; the clamp only guards
    // rounding at the extremes.
    let unit = |v: f64| v.clamp(0.0, 1.0);
    JointPrediction {
        cells,
        p1,
        p2,
        c1_given_2: unit(cells.p11 / p2),
        c2_given_1: unit(cells.p11 / p1),
        c1_given_not2: unit(cells.p10 / (1.0 - p2)),
        c2_given_not1: unit(cells.p01 / (1.0 - p1)),
        samples,
    }
}

/// Cell probabilities averaged over the latent draws encoded in `eps`
/// (`samples` stacked d-vectors, reused verbatim for every call).
fn averaged_cells(
    params: &ModelParams,
    x: &[f64],
    eps: &[f64],
    samples: usize,
) -> Result<CellProbs, ModelError> {
    let d = params.config.d;
    let enc = params.encode(x)?;
    let alpha = params.alpha();
    let mut acc = [0.0f64; 4];
    for t in 0..samples {
        let z = reparameterize(&enc, &eps[t * d..(t + 1) * d]);
        let (eta1, eta2) = params.predict_heads(&z)?;
        let cells = cell_probs(probit_marginal(eta1), probit_marginal(eta2), alpha);
        for (a, c) in acc.iter_mut().zip(cells.as_array()) {
            *a += c;
        }
    }
    let s = samples as f64;
    Ok(CellProbs {
        p11: acc[0] / s,
        p10: acc[1] / s,
        p01: acc[2] / s,
        p00: acc[3] / s,
    })
}

/// Posterior-predictive probabilities for one standardized covariate row:
/// draws `samples` latent vectors from the encoder's Gaussian, averages the
/// joint cells across draws, then derives marginals and conditionals from
/// the averaged cells. The region index is range-checked but does not enter
/// the arithmetic: the latent posterior is driven by the covariates alone.
pub fn predict_joint<R: Rng>(
    params: &ModelParams,
    x: &[f64],
    region: usize,
    samples: usize,
    rng: &mut R,
) -> Result<JointPrediction, InferError> {
    if samples == 0 {
        return Err(InferError::BadSampleCount);
    }
    if region >= params.n_regions {
        return Err(InferError::UnknownRegion {
            region,
            n_regions: params.n_regions,
        });
    }
    let eps = draw_normals(rng, samples * params.config.d);
    let cells = averaged_cells(params, x, &eps, samples)?;
    Ok(finish_prediction(cells, samples))
}

/// Predictions for every observation with one shared set of latent draws,
/// so results are independent of observation order and comparisons across
/// observations use common random numbers.
pub fn predict_many<R: Rng>(
    params: &ModelParams,
    data: &Dataset,
    samples: usize,
    rng: &mut R,
) -> Result<Vec<JointPrediction>, InferError> {
    if samples == 0 {
        return Err(InferError::BadSampleCount);
    }
    let eps = draw_normals(rng, samples * params.config.d);
    let mut out = Vec::with_capacity(data.n());
    for i in 0..data.n() {
        let cells = averaged_cells(params, data.x_row(i), &eps, samples)?;
        out.push(finish_prediction(cells, samples));
    }
    Ok(out)
}

/// Per-region means of every predicted probability column.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionRow {
    /// Region index.
    pub region_id: usize,
    /// Observations in the region.
    pub n_obs: usize,
    /// Mean P(Y₁=1, Y₂=1).
    pub p11: f64,
    /// Mean P(Y₁=1, Y₂=0).
    pub p10: f64,
    /// Mean P(Y₁=0, Y₂=1).
    pub p01: f64,
    /// Mean P(Y₁=0, Y₂=0).
    pub p00: f64,
    /// Mean P(Y₁=1).
    pub p1: f64,
    /// Mean P(Y₂=1).
    pub p2: f64,
    /// Mean P(Y₁=1 | Y₂=1).
    pub p1_given_2: f64,
    /// Mean P(Y₂=1 | Y₁=1).
    pub p2_given_1: f64,
    /// Mean P(Y₁=1 | Y₂=0).
    pub p1_given_not2: f64,
    /// Mean P(Y₂=1 | Y₁=0).
    pub p2_given_not1: f64,
}

/// Aggregates per-observation predictions into one row per region that has
/// observations; the second return value lists the regions that have none.
/// Means are summed in value order, so permuting the observations leaves
/// the table bit-identical.
pub fn region_table<R: Rng>(
    data: &Dataset,
    params: &ModelParams,
    samples: usize,
    rng: &mut R,
) -> Result<(Vec<RegionRow>, Vec<usize>), InferError> {
    let preds = predict_many(params, data, samples, rng)?;
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); data.n_regions];
    for (i, &r) in data.region.iter().enumerate() {
        groups[r].push(i);
    }
    let mut rows = Vec::new();
    let mut empty = Vec::new();
    for (r, group) in groups.iter().enumerate() {
        if group.is_empty() {
            empty.push(r);
            continue;
        }
        let mean_of = |pick: &dyn Fn(&JointPrediction) -> f64| -> f64 {
            let mut vals: Vec<f64> = group.iter().map(|&i| pick(&preds[i])).collect();
            vals.sort_by(f64::total_cmp);
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        rows.push(RegionRow {
            region_id: r,
            n_obs: group.len(),
            p11: mean_of(&|p| p.cells.p11),
            p10: mean_of(&|p| p.cells.p10),
            p01: mean_of(&|p| p.cells.p01),
            p00: mean_of(&|p| p.cells.p00),
            p1: mean_of(&|p| p.p1),
            p2: mean_of(&|p| p.p2),
            p1_given_2: mean_of(&|p| p.c1_given_2),
            p2_given_1: mean_of(&|p| p.c2_given_1),
            p1_given_not2: mean_of(&|p| p.c1_given_not2),
            p2_given_not1: mean_of(&|p| p.c2_given_not1),
        });
    }
    Ok((rows, empty))
}

/// An average covariate effect with its bootstrap percentile interval.
#[derive(Clone, Debug, PartialEq)]
pub struct AceEstimate {
    /// Covariate column name.
    pub covariate: String,
    /// Human-readable contrast, `level vs reference` in raw units.
    pub contrast: String,
    /// Joint outcome pattern (y₁, y₂) whose probability is contrasted.
    pub pattern: (u8, u8),
    /// Mean change in the pattern probability.
    pub estimate: f64,
    /// 2.5% bootstrap bound (never above the estimate).
    pub lower: f64,
    /// 97.5% bootstrap bound (never below the estimate).
    pub upper: f64,
    /// True when the interval excludes zero.
    pub reject_null: bool,
    /// True when level and reference coincide, forcing an exact zero.
    pub degenerate: bool,
}

struct AceSetup {
    column: usize,
    eps: Vec<f64>,
}

fn ace_setup<R: Rng>(
    data: &Dataset,
    params: &ModelParams,
    covariate: &str,
    pattern: (u8, u8),
    samples: usize,
    bootstrap: usize,
    eps_rng: &mut R,
) -> Result<AceSetup, InferError> {
    if samples == 0 {
        return Err(InferError::BadSampleCount);
    }
    if bootstrap < MIN_BOOTSTRAP {
        return Err(InferError::BootstrapTooSmall {
            requested: bootstrap,
            minimum: MIN_BOOTSTRAP,
        });
    }
    if pattern.0 > 1 || pattern.1 > 1 {
        return Err(InferError::BadPattern);
    }
    let column = data
        .feature_index(covariate)
        .ok_or_else(|| InferError::UnknownColumn(covariate.to_string()))?;
    let eps = draw_normals(eps_rng, samples * params.config.d);
    Ok(AceSetup { column, eps })
}

/// Converts a raw-unit covariate value into the units the data is stored
/// in (the recorded training standardization, when present).
fn stored_units(data: &Dataset, column: usize, raw: f64) -> f64 {
    match &data.standardization {
        Some(st) => st.standardize_value(column, raw),
        None => raw,
    }
}

fn ace_core<R: Rng>(
    data: &Dataset,
    params: &ModelParams,
    setup: &AceSetup,
    level_stored: f64,
    reference_stored: f64,
    pattern: (u8, u8),
    samples: usize,
    bootstrap: usize,
    boot_rng: &mut R,
) -> Result<(f64, f64, f64, bool), InferError> {
    let n = data.n();
    let mut diffs = Vec::with_capacity(n);
    let mut row = vec![0.0; data.p()];
    for i in 0..n {
        row.copy_from_slice(data.x_row(i));
        row[setup.column] = level_stored;
        let at_level = averaged_cells(params, &row, &setup.eps, samples)?
            .pattern(pattern.0, pattern.1);
        row[setup.column] = reference_stored;
        let at_reference = averaged_cells(params, &row, &setup.eps, samples)?
            .pattern(pattern.0, pattern.1);
        diffs.push(at_level - at_reference);
    }
    let estimate = diffs.iter().sum::<f64>() / n as f64;
    let mut replicates = Vec::with_capacity(bootstrap);
    for _ in 0..bootstrap {
        let mut acc = 0.0;
        for _ in 0..n {
            acc += diffs[boot_rng.random_range(0..n)];
        }
        replicates.push(acc / n as f64);
    }
    let lower = quantile(&replicates, 0.025).min(estimate);
    let upper = quantile(&replicates, 0.975).max(estimate);
    let reject = lower > 0.0 || upper < 0.0;
    Ok((estimate, lower, upper, reject))
}

/// Average covariate effect of setting column `covariate` to `level`
/// versus `reference` (both in raw units) on the probability of the joint
/// outcome `pattern`: every observation's column is overwritten, the
/// pattern probabilities are averaged over observations under both
/// settings, and the effect is their difference. The interval resamples
/// observations with replacement around the single fitted model.
#[allow(clippy::too_many_arguments)]
pub fn ace_categorical<R: Rng>(
    data: &Dataset,
    params: &ModelParams,
    covariate: &str,
    level: f64,
    reference: f64,
    pattern: (u8, u8),
    samples: usize,
    bootstrap: usize,
    eps_rng: &mut R,
    boot_rng: &mut R,
) -> Result<AceEstimate, InferError> {
    let setup = ace_setup(data, params, covariate, pattern, samples, bootstrap, eps_rng)?;
    let lv = stored_units(data, setup.column, level);
    let rv = stored_units(data, setup.column, reference);
    let (estimate, lower, upper, reject) =
        ace_core(data, params, &setup, lv, rv, pattern, samples, bootstrap, boot_rng)?;
    Ok(AceEstimate {
        covariate: covariate.to_string(),
        contrast: format!("{level} vs {reference}"),
        pattern,
        estimate,
        lower,
        upper,
        reject_null: reject,
        degenerate: lv == rv,
    })
}

/// Settings for [`ace_categorical_refit`].
#[derive(Clone, Debug)]
pub struct RefitAceConfig {
    /// Monte Carlo latent draws per observation and covariate setting.
    pub samples: usize,
    /// Replicates in the bootstrap pool.
    pub bootstrap: usize,
    /// Model refits on resampled datasets feeding the pool.
    pub refits: usize,
    /// Seed for the latent draws, the resampling, and the refit training
    /// seeds.
    pub seed: u64,
}

fn sample_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Per-observation contrasts of all four joint-pattern probabilities when
/// the covariate column moves from `reference_stored` to `level_stored`,
/// in (1,1), (1,0), (0,1), (0,0) order, from one forward sweep per row.
#[allow(clippy::too_many_arguments)]
fn pattern_contrasts(
    data: &Dataset,
    params: &ModelParams,
    rows: &[usize],
    column: usize,
    level_stored: f64,
    reference_stored: f64,
    eps: &[f64],
    samples: usize,
) -> Result<[Vec<f64>; 4], InferError> {
    let mut out: [Vec<f64>; 4] = core::array::from_fn(|_| Vec::with_capacity(rows.len()));
    let mut row = vec![0.0; data.p()];
    for &i in rows {
        row.copy_from_slice(data.x_row(i));
        row[column] = level_stored;
        let at_level = averaged_cells(params, &row, eps, samples)?.as_array();
        row[column] = reference_stored;
        let at_reference = averaged_cells(params, &row, eps, samples)?.as_array();
        for (acc, (l, r)) in out.iter_mut().zip(at_level.iter().zip(&at_reference)) {
            acc.push(l - r);
        }
    }
    Ok(out)
}

/// Average covariate effects of `level` versus `reference` on all four
/// joint-outcome patterns, with intervals from a refit bootstrap.
///
/// The model is fit once on `data` as given for the point estimates, then
/// refit `cfg.refits` more times on datasets resampled with replacement,
/// each refit under its own training seed and evaluated on its own
/// resample. Pool replicates cycle through the refits and resample
/// observations within one refit's contrasts, so the pool carries both
/// fitting variability and sampling variability. The single-model interval
/// of [`ace_categorical`] reflects only the latter, which understates the
/// uncertainty of a weak effect: every refit of a no-signal column settles
/// on a different small spurious value, and only the spread across refits
/// measures that. Latent noise is shared across fits and across the two
/// covariate settings, so Monte Carlo error largely cancels from every
/// contrast.
///
/// The 95% interval is the point estimate plus or minus the normal-theory
/// margin built from the pool's standard deviation. With a handful of
/// refits the pool is a mixture of a few clusters, so its tail quantiles
/// land on whichever cluster happens to sit outermost; a dispersion-based
/// interval centered on the point estimate uses the whole pool and is far
/// steadier at this size.
///
/// Estimates come back in (1,1), (1,0), (0,1), (0,0) order and sum to zero
/// up to rounding, because the four cells sum to one under either setting.
#[allow(clippy::too_many_arguments)]
pub fn ace_categorical_refit(
    data: &Dataset,
    graph: &SpatialGraph,
    model: &ModelConfig,
    train: &TrainConfig,
    covariate: &str,
    level: f64,
    reference: f64,
    cfg: &RefitAceConfig,
) -> Result<[AceEstimate; 4], InferError> {
    if cfg.samples == 0 {
        return Err(InferError::BadSampleCount);
    }
    if cfg.bootstrap < MIN_BOOTSTRAP {
        return Err(InferError::BootstrapTooSmall {
            requested: cfg.bootstrap,
            minimum: MIN_BOOTSTRAP,
        });
    }
    if cfg.refits == 0 {
        return Err(InferError::BadRefitCount);
    }
    let column = data
        .feature_index(covariate)
        .ok_or_else(|| InferError::UnknownColumn(covariate.to_string()))?;
    let lv = stored_units(data, column, level);
    let rv = stored_units(data, column, reference);
    let n = data.n();
    let mut eps_rng = stream_rng(cfg.seed, Stream::Eps);
    let eps = draw_normals(&mut eps_rng, cfg.samples * model.d);
    let mut boot_rng = stream_rng(cfg.seed, Stream::Bootstrap);

    // Point estimates from the fit on the data as given.
    let (params, _) = fit(data, graph, model, train)?;
    let all_rows: Vec<usize> = (0..n).collect();
    let base = pattern_contrasts(data, &params, &all_rows, column, lv, rv, &eps, cfg.samples)?;
    let estimates: [f64; 4] = core::array::from_fn(|k| sample_mean(&base[k]));

    // Refit members, each on its own resample of the rows.
    let mut members: Vec<[Vec<f64>; 4]> = Vec::with_capacity(cfg.refits);
    for r in 0..cfg.refits {
        let picked: Vec<usize> = (0..n).map(|_| boot_rng.random_range(0..n)).collect();
        let mut x = Vec::with_capacity(n * data.p());
        let mut y = Vec::with_capacity(n);
        let mut region = Vec::with_capacity(n);
        for &i in &picked {
            x.extend_from_slice(data.x_row(i));
            y.push(data.y[i]);
            region.push(data.region[i]);
        }
        let resampled = Dataset {
            x,
            y,
            region,
            n_regions: data.n_regions,
            feature_names: data.feature_names.clone(),
            standardization: data.standardization.clone(),
        };
        let mut tc = train.clone();
        tc.seed = train.seed.wrapping_add(7919 * (r as u64 + 1));
        let (member, _) = fit(&resampled, graph, model, &tc)?;
        members.push(pattern_contrasts(
            &resampled,
            &member,
            &all_rows,
            column,
            lv,
            rv,
            &eps,
            cfg.samples,
        )?);
    }

    // Bootstrap pool: replicate b cycles through the refits and resamples
    // rows within that refit, with index draws shared across patterns.
    let mut pools: [Vec<f64>; 4] = core::array::from_fn(|_| Vec::with_capacity(cfg.bootstrap));
    let mut idx = vec![0usize; n];
    for b in 0..cfg.bootstrap {
        let member = &members[b % cfg.refits];
        for slot in idx.iter_mut() {
            *slot = boot_rng.random_range(0..n);
        }
        for (pool, contrasts) in pools.iter_mut().zip(member.iter()) {
            let mut acc = 0.0;
            for &i in &idx {
                acc += contrasts[i];
            }
            pool.push(acc / n as f64);
        }
    }

    let patterns = [(1u8, 1u8), (1, 0), (0, 1), (0, 0)];
    Ok(core::array::from_fn(|k| {
        let estimate = estimates[k];
        let center = sample_mean(&pools[k]);
        let var = pools[k]
            .iter()
            .map(|v| (v - center) * (v - center))
            .sum::<f64>()
            / (pools[k].len() - 1) as f64;
        let margin = Z_95 * var.sqrt();
        let lower = estimate - margin;
        let upper = estimate + margin;
        AceEstimate {
            covariate: covariate.to_string(),
            contrast: format!("{level} vs {reference}"),
            pattern: patterns[k],
            estimate,
            lower,
            upper,
            reject_null: lower > 0.0 || upper < 0.0,
            degenerate: lv == rv,
        }
    }))
}

/// Effect curve for a continuous covariate: one estimate per grid value
/// (raw units) against a reference fixed at the smallest observed value of
/// the column. Latent draws and bootstrap index draws are shared across
/// grid points so the curve and its band move smoothly.
#[allow(clippy::too_many_arguments)]
pub fn ace_curve<R: Rng + Clone>(
    data: &Dataset,
    params: &ModelParams,
    covariate: &str,
    grid: &[f64],
    pattern: (u8, u8),
    samples: usize,
    bootstrap: usize,
    eps_rng: &mut R,
    boot_rng: &mut R,
) -> Result<Vec<AceEstimate>, InferError> {
    if grid.is_empty() {
        return Err(InferError::EmptyGrid);
    }
    let setup = ace_setup(data, params, covariate, pattern, samples, bootstrap, eps_rng)?;
    let stored_min = (0..data.n())
        .map(|i| data.x_row(i)[setup.column])
        .min_by(f64::total_cmp)
        .expect("datasets are nonempty");
    let raw_reference = match &data.standardization {
        Some(st) => st.mean[setup.column] + st.sd[setup.column] * stored_min,
        None => stored_min,
    };
    let boot_base = boot_rng.clone();
    let mut out = Vec::with_capacity(grid.len());
    for &value in grid {
        let lv = stored_units(data, setup.column, value);
        let mut br = boot_base.clone();
        let (estimate, lower, upper, reject) = ace_core(
            data, params, &setup, lv, stored_min, pattern, samples, bootstrap, &mut br,
        )?;
        out.push(AceEstimate {
            covariate: covariate.to_string(),
            contrast: format!("{value} vs {raw_reference}"),
            pattern,
            estimate,
            lower,
            upper,
            reject_null: reject,
            degenerate: lv == stored_min,
        });
    }
    Ok(out)
}
