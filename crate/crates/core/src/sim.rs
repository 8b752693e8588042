//! Synthetic benchmark generator: spatially smoothed region means, chained
//! latent components, a linear covariate loading with noise, logistic
//! outcome probabilities (one score with an elementwise-sin nonlinearity),
//! and paired outcomes coupled through the copula by inverse probability
//! transform of a dependent uniform pair.
//!
//! Every draw flows from a single seeded stream in a fixed order, so a
//! configuration maps to exactly one dataset, bit for bit. The generator
//! also supports appending a binary covariate with a known effect on both
//! outcome scores, for validating effect estimates against ground truth.

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

use crate::copula;
use crate::data::{DataError, Dataset};
use crate::graph::{build_precision, gmrf_sample, GraphError, SpatialGraph};
use crate::rng::{stream_rng, Stream};

/// Errors from the generator.
#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    /// The configuration is internally inconsistent.
    #[error("invalid simulation configuration: {0}")]
    BadConfig(&'static str),
    /// Graph construction or factorization failed.
    #[error(transparent)]
    Graph(#[from] GraphError),
    /// The assembled dataset failed validation.
    #[error(transparent)]
    Data(#[from] DataError),
    /// Ground truth and dataset disagree on the observation count.
    #[error("ground truth covers {truth} observations but the dataset has {data}")]
    MismatchedTruth {
        /// Observations in the ground truth.
        truth: usize,
        /// Observations in the dataset.
        data: usize,
    },
}

/// How to obtain the region graph.
#[derive(Clone, Debug)]
pub enum GraphSpec {
    /// A rows × cols lattice with 4-neighbour adjacency.
    Grid {
        /// Grid rows.
        rows: usize,
        /// Grid columns.
        cols: usize,
    },
    /// A random geometric graph on uniform points in the unit square.
    Geometric {
        /// Number of regions.
        regions: usize,
        /// Connection radius.
        radius: f64,
    },
    /// A pre-built graph (e.g. read from an edge list).
    Explicit(SpatialGraph),
}

/// Full description of one synthetic dataset.
#[derive(Clone, Debug)]
pub struct SimConfig {
    /// Observations.
    pub n: usize,
    /// Latent dimension.
    pub d: usize,
    /// Covariate dimension.
    pub p: usize,
    /// Spatial smoothing strength of the region-mean prior.
    pub rho: f64,
    /// Dependence parameter coupling the two outcomes (≥ 1; 1 = independent).
    pub alpha_true: f64,
    /// Variance of latents around their region mean.
    pub sigma2_z: f64,
    /// Variance of covariate noise around the linear loading.
    pub sigma2_x: f64,
    /// Optional post-hoc covariate perturbation variance (0 disables).
    pub noise_sigma2: f64,
    /// Master seed.
    pub seed: u64,
    /// Region graph source.
    pub graph: GraphSpec,
}

/// Everything the generator knows that a fitted model does not.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    /// The region graph used.
    pub graph: SpatialGraph,
    /// Region means, row-major L×d.
    pub mu: Vec<f64>,
    /// Latents after chaining, row-major n×d.
    pub z: Vec<f64>,
    /// Outcome scores (η1, η2) per observation.
    pub eta: Vec<[f64; 2]>,
    /// Outcome probabilities (π1, π2) per observation.
    pub pi: Vec<[f64; 2]>,
    /// The dependent uniform pair that produced the outcomes.
    pub u: Vec<[f64; 2]>,
    /// Linear coefficients of score 1.
    pub beta11: Vec<f64>,
    /// Coefficients of the elementwise-sin term in score 1.
    pub beta12: Vec<f64>,
    /// Linear coefficients of score 2.
    pub beta2: Vec<f64>,
    /// Covariate loading matrix, row-major p×d.
    pub loading: Vec<f64>,
    /// Dependence parameter used for the uniform pairs.
    pub alpha_true: f64,
}

/// Record of an injected covariate effect.
#[derive(Clone, Debug)]
pub struct InjectedEffect {
    /// Name of the appended column.
    pub column: String,
    /// Shift added to both outcome scores when the covariate is 1.
    pub delta: f64,
    /// The realized binary assignment per observation.
    pub assignment: Vec<u8>,
    /// Exact average effect on each outcome cell (order: 11, 10, 01, 00)
    /// of setting the covariate to 1 versus 0 for every observation,
    /// averaged over the empirical score distribution.
    pub true_ace: [f64; 4],
}

fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn validate(config: &SimConfig, l: usize) -> Result<(), SimError> {
    if config.n == 0 {
        return Err(SimError::BadConfig("observation count must be positive"));
    }
    if config.n < l {
        return Err(SimError::BadConfig(
            "observation count must be at least the region count",
        ));
    }
    if config.d == 0 || config.p == 0 {
        return Err(SimError::BadConfig("dimensions must be positive"));
    }
    if !(config.alpha_true >= 1.0 && config.alpha_true.is_finite()) {
        return Err(SimError::BadConfig("dependence parameter must be ≥ 1"));
    }
    if !(config.sigma2_z >= 0.0 && config.sigma2_z.is_finite())
        || !(config.sigma2_x >= 0.0 && config.sigma2_x.is_finite())
        || !(config.noise_sigma2 >= 0.0 && config.noise_sigma2.is_finite())
    {
        return Err(SimError::BadConfig("variances must be nonnegative"));
    }
    Ok(())
}

/// Draws one dataset and its ground truth. The draw order is part of the
/// reproducibility contract: graph (if random), region labels, region
/// means, latents, loading matrix, covariate noise, score coefficients,
/// dependent uniform pairs, then the optional perturbation noise.
pub fn generate(config: &SimConfig) -> Result<(Dataset, GroundTruth), SimError> {
    let mut rng = stream_rng(config.seed, Stream::Sim);
    let graph = match &config.graph {
        GraphSpec::Grid { rows, cols } => SpatialGraph::grid(*rows, *cols, config.rho)?,
        GraphSpec::Geometric { regions, radius } => {
            SpatialGraph::geometric(*regions, *radius, config.rho, &mut rng)?
        }
        GraphSpec::Explicit(g) => {
            if (g.rho() - config.rho).abs() > 1e-12 {
                return Err(SimError::BadConfig(
                    "explicit graph carries a different smoothing parameter",
                ));
            }
            g.clone()
        }
    };
    let l = graph.len();
    validate(config, l)?;
    let (n, d, p) = (config.n, config.d, config.p);

    let region: Vec<usize> = (0..n).map(|_| rng.random_range(0..l)).collect();

    let factor = build_precision(&graph)?;
    let mut mu = vec![0.0; l * d];
    for k in 0..d {
        let col = gmrf_sample(&factor, 1.0, &mut rng);
        for (j, v) in col.iter().enumerate() {
            mu[j * d + k] = *v;
        }
    }

    let sigma_z = config.sigma2_z.sqrt();
    let mut z = vec![0.0; n * d];
    for i in 0..n {
        let r = region[i];
        for k in 0..d {
            let e: f64 = StandardNormal.sample(&mut rng);
            z[i * d + k] = mu[r * d + k] + sigma_z * e;
        }
        // Chain the components so later dimensions accumulate earlier ones.
        for k in 1..d {
            z[i * d + k] += z[i * d + k - 1];
        }
    }

    let loading: Vec<f64> = (0..p * d)
        .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();
    let sigma_x = config.sigma2_x.sqrt();
    let mut x = vec![0.0; n * p];
    for i in 0..n {
        for j in 0..p {
            let mut acc = 0.0;
            for k in 0..d {
                acc += loading[j * d + k] * z[i * d + k];
            }
            let e: f64 = StandardNormal.sample(&mut rng);
            x[i * p + j] = acc + sigma_x * e;
        }
    }

    let draw_vec = |rng: &mut rand_chacha::ChaCha8Rng, len: usize| -> Vec<f64> {
        (0..len)
            .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect()
    };
    let beta11 = draw_vec(&mut rng, d);
    let beta12 = draw_vec(&mut rng, d);
    let beta2 = draw_vec(&mut rng, d);

    let mut eta = Vec::with_capacity(n);
    let mut pi = Vec::with_capacity(n);
    for i in 0..n {
        let zi = &z[i * d..(i + 1) * d];
        let mut e1 = 0.0;
        let mut e2 = 0.0;
        for k in 0..d {
            e1 += zi[k] * beta11[k] + zi[k].sin() * beta12[k];
            e2 += zi[k] * beta2[k];
        }
        eta.push([e1, e2]);
        pi.push([logistic(e1), logistic(e2)]);
    }

    let mut u = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let (u1, u2) = copula::sample_pair(config.alpha_true, &mut rng);
        u.push([u1, u2]);
        y.push([u8::from(u1 <= pi[i][0]), u8::from(u2 <= pi[i][1])]);
    }

    if config.noise_sigma2 > 0.0 {
        let s = config.noise_sigma2.sqrt();
        for v in &mut x {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v += s * e;
        }
    }

    let feature_names = (1..=p).map(|j| alloc::format!("x{j}")).collect();
    let data = Dataset::new(x, y, region, l, feature_names)?;
    let truth = GroundTruth {
        graph,
        mu,
        z,
        eta,
        pi,
        u,
        beta11,
        beta12,
        beta2,
        loading,
        alpha_true: config.alpha_true,
    };
    Ok((data, truth))
}

/// Appends a Bernoulli(½) column named `injected` whose value 1 shifts both
/// outcome scores by `delta`, regenerates the outcomes by reusing the
/// original dependent uniform pairs, and records the exact per-cell average
/// effect of the intervention.
pub fn inject_known_effect<R: Rng>(
    data: &Dataset,
    truth: &GroundTruth,
    delta: f64,
    rng: &mut R,
) -> Result<(Dataset, InjectedEffect), SimError> {
    let n = data.n();
    if truth.eta.len() != n || truth.u.len() != n {
        return Err(SimError::MismatchedTruth {
            truth: truth.eta.len(),
            data: n,
        });
    }
    let assignment: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();

    let p = data.p();
    let mut x = Vec::with_capacity(n * (p + 1));
    let mut y = Vec::with_capacity(n);
    let mut true_ace = [0.0; 4];
    for i in 0..n {
        x.extend_from_slice(data.x_row(i));
        x.push(f64::from(assignment[i]));
        let shift = delta * f64::from(assignment[i]);
        let [e1, e2] = truth.eta[i];
        let p1 = logistic(e1 + shift);
        let p2 = logistic(e2 + shift);
        let [u1, u2] = truth.u[i];
        y.push([u8::from(u1 <= p1), u8::from(u2 <= p2)]);

        // Exact intervention contrast for this observation: probabilities at
        // covariate 1 versus covariate 0, coupled by the true copula.
        let on = copula::cell_probs(
            logistic(e1 + delta),
            logistic(e2 + delta),
            truth.alpha_true,
        );
        let off = copula::cell_probs(logistic(e1), logistic(e2), truth.alpha_true);
        let on_a = on.as_array();
        let off_a = off.as_array();
        for c in 0..4 {
            true_ace[c] += (on_a[c] - off_a[c]) / n as f64;
        }
    }

    let mut feature_names = data.feature_names.clone();
    feature_names.push("injected".to_string());
    let augmented = Dataset::new(x, y, data.region.clone(), data.n_regions, feature_names)?;
    Ok((
        augmented,
        InjectedEffect {
            column: "injected".to_string(),
            delta,
            assignment,
            true_ace,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn base_config() -> SimConfig {
        SimConfig {
            n: 400,
            d: 3,
            p: 5,
            rho: 0.9,
            alpha_true: 2.0,
            sigma2_z: 1.0,
            sigma2_x: 1.0,
            noise_sigma2: 0.0,
            seed: 42,
            graph: GraphSpec::Grid { rows: 3, cols: 3 },
        }
    }

    #[test]
    fn shapes_and_labels() {
        let (data, truth) = generate(&base_config()).unwrap();
        assert_eq!(data.n(), 400);
        assert_eq!(data.p(), 5);
        assert_eq!(data.n_regions, 9);
        assert!(data.region.iter().all(|&r| r < 9));
        assert_eq!(data.feature_names[0], "x1");
        assert_eq!(data.feature_names[4], "x5");
        assert_eq!(truth.mu.len(), 9 * 3);
        assert_eq!(truth.z.len(), 400 * 3);
        assert_eq!(truth.eta.len(), 400);
        assert_eq!(truth.loading.len(), 5 * 3);
        assert!(data.standardization.is_none());
        // Uniform pairs live strictly inside the unit square.
        assert!(truth
            .u
            .iter()
            .all(|&[a, b]| a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0));
    }

    #[test]
    fn reproducible_bit_for_bit() {
        let (d1, t1) = generate(&base_config()).unwrap();
        let (d2, t2) = generate(&base_config()).unwrap();
        assert_eq!(d1.x, d2.x);
        assert_eq!(d1.y, d2.y);
        assert_eq!(d1.region, d2.region);
        assert_eq!(t1.z, t2.z);
        assert_eq!(t1.beta11, t2.beta11);
        let mut other = base_config();
        other.seed = 43;
        let (d3, _) = generate(&other).unwrap();
        assert_ne!(d1.x, d3.x);
    }

    #[test]
    fn outcome_marginals_calibrated() {
        let mut config = base_config();
        config.n = 5000;
        let (data, truth) = generate(&config).unwrap();
        let mean_y1 = data.y.iter().map(|y| f64::from(y[0])).sum::<f64>() / 5000.0;
        let mean_pi1 = truth.pi.iter().map(|p| p[0]).sum::<f64>() / 5000.0;
        let var: f64 = truth.pi.iter().map(|p| p[0] * (1.0 - p[0])).sum::<f64>();
        let se = var.sqrt() / 5000.0;
        assert!(
            (mean_y1 - mean_pi1).abs() < 3.0 * se,
            "marginal calibration off: {mean_y1} vs {mean_pi1} (se {se})"
        );
    }

    #[test]
    fn chained_latents_are_correlated() {
        let mut config = base_config();
        config.n = 10_000;
        config.graph = GraphSpec::Grid { rows: 4, cols: 4 };
        let (_, truth) = generate(&config).unwrap();
        let d = config.d;
        for k in 1..d {
            let a: Vec<f64> = (0..config.n).map(|i| truth.z[i * d + k - 1]).collect();
            let b: Vec<f64> = (0..config.n).map(|i| truth.z[i * d + k]).collect();
            let corr = correlation(&a, &b);
            assert!(corr > 0.5, "chained correlation {corr} at component {k}");
        }
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for (x, y) in a.iter().zip(b) {
            cov += (x - ma) * (y - mb);
            va += (x - ma) * (x - ma);
            vb += (y - mb) * (y - mb);
        }
        cov / (va.sqrt() * vb.sqrt())
    }

    #[test]
    fn perturbation_noise_leaves_outcomes_alone() {
        let clean = base_config();
        let mut noisy = base_config();
        noisy.noise_sigma2 = 4.0;
        let (dc, tc) = generate(&clean).unwrap();
        let (dn, tn) = generate(&noisy).unwrap();
        // Perturbation is drawn last: identical outcomes and latents,
        // different covariates.
        assert_eq!(dc.y, dn.y);
        assert_eq!(dc.region, dn.region);
        assert_eq!(tc.z, tn.z);
        assert_ne!(dc.x, dn.x);
        let mean_shift_sq = dc
            .x
            .iter()
            .zip(&dn.x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / dc.x.len() as f64;
        // Mean squared perturbation ≈ its variance.
        assert!((mean_shift_sq - 4.0).abs() < 0.5);
    }

    #[test]
    fn config_rejections() {
        let mut bad = base_config();
        bad.n = 4; // below the region count of the 3×3 grid
        assert!(matches!(generate(&bad), Err(SimError::BadConfig(_))));
        let mut bad = base_config();
        bad.alpha_true = 0.5;
        assert!(matches!(generate(&bad), Err(SimError::BadConfig(_))));
        let mut bad = base_config();
        bad.p = 0;
        assert!(matches!(generate(&bad), Err(SimError::BadConfig(_))));
    }

    #[test]
    fn inject_zero_delta_is_identity_on_outcomes() {
        let (data, truth) = generate(&base_config()).unwrap();
        let mut rng = stream_rng(7, Stream::Sim);
        let (aug, effect) = inject_known_effect(&data, &truth, 0.0, &mut rng).unwrap();
        assert_eq!(aug.y, data.y);
        assert_eq!(aug.p(), data.p() + 1);
        assert_eq!(aug.feature_names.last().unwrap(), "injected");
        assert_eq!(effect.true_ace, [0.0; 4]);
        // The appended column is exactly the assignment.
        for i in 0..aug.n() {
            assert_eq!(aug.x_row(i)[data.p()], f64::from(effect.assignment[i]));
        }
    }

    #[test]
    fn inject_positive_delta_raises_joint_probability() {
        let mut config = base_config();
        config.n = 5000;
        let (data, truth) = generate(&config).unwrap();
        let mut rng = stream_rng(8, Stream::Sim);
        let (aug, effect) = inject_known_effect(&data, &truth, 1.0, &mut rng).unwrap();
        // Pattern (1,1) should become more likely; all four shifts cancel.
        assert!(effect.true_ace[0] > 0.0);
        assert!(effect.true_ace[3] < 0.0);
        let sum: f64 = effect.true_ace.iter().sum();
        assert_abs_diff_eq!(sum, 0.0, epsilon = 1e-12);
        // Empirical check: outcome 1 is more frequent where the column is 1.
        let (mut on, mut n_on, mut off, mut n_off) = (0.0, 0, 0.0, 0);
        for i in 0..aug.n() {
            if effect.assignment[i] == 1 {
                on += f64::from(aug.y[i][0]);
                n_on += 1;
            } else {
                off += f64::from(aug.y[i][0]);
                n_off += 1;
            }
        }
        assert!(on / n_on as f64 > off / n_off as f64 + 0.05);
    }

    #[test]
    fn explicit_graph_round_trip() {
        let g = SpatialGraph::new(4, &[(0, 1), (1, 2), (2, 3), (3, 0)], 0.9).unwrap();
        let mut config = base_config();
        config.graph = GraphSpec::Explicit(g.clone());
        let (data, truth) = generate(&config).unwrap();
        assert_eq!(truth.graph.edges(), g.edges());
        assert_eq!(data.n_regions, 4);
        // Mismatched smoothing parameter is rejected.
        let mut bad = base_config();
        bad.rho = 0.5;
        bad.graph = GraphSpec::Explicit(g);
        assert!(matches!(generate(&bad), Err(SimError::BadConfig(_))));
    }
}
