//! Comparison models and evaluation metrics: an intercept-plus-slopes
//! logistic regression fitted by Newton iterations, a feedforward network
//! treating the two outcomes as independent, rank-based AUC with exact tie
//! handling, an exact two-sided sign test, and the per-cell summary table
//! built from sweep results.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
// Required for float math in no_std builds; when a dependency links std,
// method calls resolve to the inherent f64 methods instead.
#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::data::Dataset;
use crate::linalg;
use crate::model::probit_with_grad;
use crate::nn::{Activation, AdamConfig, AdamState, Mlp, MlpGrads, NnError, ParamLayout};
use crate::rng::{stream_rng, Stream};
use crate::train::{draw_normals, shuffle, AblationRow, TrainConfig, TrainError};

/// Errors from baseline fitting and metrics.
#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    /// The requested outcome index is not 0 or 1.
    #[error("outcome index {0} out of range (paired outcomes are 0 and 1)")]
    UnknownOutcome(usize),
    /// AUC is undefined when only one label class is present.
    #[error("cannot compute AUC: labels contain a single class")]
    SingleClass,
    /// The summary has nothing to aggregate.
    #[error("no successful benchmark rows to summarize")]
    InsufficientSeeds,
}

/// The model lineup compared in the benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Independent per-outcome logistic regression.
    Logistic,
    /// Feedforward network on covariates, outcomes treated independently.
    IndependentNn,
    /// The full model with the dependence parameter pinned at 1.
    VaeNoCopula,
    /// The full model with learned dependence.
    VaeCopula,
}

impl Variant {
    /// All variants in canonical order.
    pub const ALL: [Variant; 4] = [
        Variant::Logistic,
        Variant::IndependentNn,
        Variant::VaeNoCopula,
        Variant::VaeCopula,
    ];

    /// The tag used in result tables.
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Logistic => "logistic",
            Variant::IndependentNn => "independent_nn",
            Variant::VaeNoCopula => "vae_no_copula",
            Variant::VaeCopula => "vae_copula",
        }
    }

    /// Parses a tag produced by [`Self::as_str`].
    pub fn parse(s: &str) -> Option<Self> {
        Variant::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

fn logistic_fn(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// A fitted per-outcome logistic regression.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticFit {
    /// Slope per covariate.
    pub coef: Vec<f64>,
    /// Intercept.
    pub intercept: f64,
    /// Whether the gradient max-norm dropped below 1e−6.
    pub converged: bool,
    /// Whether coefficients diverged past 1e3 (perfect separation or a
    /// degenerate outcome); the fit is still returned.
    pub separation: bool,
    /// Newton iterations performed.
    pub iterations: usize,
}

impl LogisticFit {
    /// Predicted outcome probability for one covariate row.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut eta = self.intercept;
        for (c, v) in self.coef.iter().zip(x) {
            eta += c * v;
        }
        logistic_fn(eta)
    }
}

/// Maximizes the Bernoulli log-likelihood with a logit link by Newton
/// iterations (iteratively reweighted least squares with a tiny ridge for
/// degenerate designs). Convergence: gradient max-norm < 1e−6 or `max_iter`
/// passes. Coefficients past 1e3 in magnitude set the separation flag.
pub fn fit_logistic(
    data: &Dataset,
    outcome: usize,
    max_iter: usize,
) -> Result<LogisticFit, BaselineError> {
    if outcome >= 2 {
        return Err(BaselineError::UnknownOutcome(outcome));
    }
    let n = data.n();
    let p = data.p();
    let m = p + 1;
    let mut b = vec![0.0; m];
    let mut g = vec![0.0; m];
    let mut h = vec![0.0; m * m];
    let mut converged = false;
    // A single-class outcome has no maximizer (the intercept drifts to the
    // boundary), so it is flagged up front; covariate-driven separation is
    // caught below by the diverging-coefficient rule.
    let positives = data.y.iter().filter(|y| y[outcome] == 1).count();
    let mut separation = positives == 0 || positives == n;
    let mut iterations = 0;
    for iter in 1..=max_iter {
        iterations = iter;
        for v in &mut g {
            *v = 0.0;
        }
        for v in &mut h {
            *v = 0.0;
        }
        for i in 0..n {
            let x = data.x_row(i);
            let mut eta = b[0];
            for j in 0..p {
                eta += b[j + 1] * x[j];
            }
            let prob = logistic_fn(eta);
            let r = f64::from(data.y[i][outcome]) - prob;
            let w = (prob * (1.0 - prob)).max(1e-10);
            for a in 0..m {
                let xa = if a == 0 { 1.0 } else { x[a - 1] };
                g[a] += r * xa;
                for c in 0..=a {
                    let xc = if c == 0 { 1.0 } else { x[c - 1] };
                    h[a * m + c] += w * xa * xc;
                }
            }
        }
        if g.iter().all(|v| v.abs() < 1e-6) {
            converged = true;
            break;
        }
        for a in 0..m {
            h[a * m + a] += 1e-8;
            for c in 0..a {
                h[c * m + a] = h[a * m + c];
            }
        }
        let chol = match linalg::cholesky(&h, m) {
            Ok(l) => l,
            Err(_) => break,
        };
        let delta = linalg::solve_spd(&chol, m, &g);
        for (bj, dj) in b.iter_mut().zip(&delta) {
            *bj += dj;
        }
        if b.iter().any(|v| v.abs() > 1e3) {
            separation = true;
            break;
        }
    }
    Ok(LogisticFit {
        intercept: b[0],
        coef: b[1..].to_vec(),
        converged,
        separation,
        iterations,
    })
}

/// A fitted independent-outcome feedforward network.
#[derive(Clone, Debug, PartialEq)]
pub struct NnFit {
    /// The score network: covariates → two real scores.
    pub net: Mlp,
}

impl NnFit {
    /// Predicted outcome probabilities (probit-linked scores).
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64), NnError> {
        let (eta, _) = self.net.forward(x)?;
        Ok((probit_with_grad(eta[0]).0, probit_with_grad(eta[1]).0))
    }
}

fn mlp_to_flat(m: &Mlp) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.param_count());
    for layer in &m.layers {
        out.extend_from_slice(&layer.weights);
        out.extend_from_slice(&layer.biases);
    }
    out
}

fn mlp_set_from_flat(m: &mut Mlp, flat: &[f64]) {
    let mut pos = 0;
    for layer in &mut m.layers {
        let nw = layer.weights.len();
        layer.weights.copy_from_slice(&flat[pos..pos + nw]);
        pos += nw;
        let nb = layer.biases.len();
        layer.biases.copy_from_slice(&flat[pos..pos + nb]);
        pos += nb;
    }
}

fn mlp_grads_to_flat(g: &MlpGrads) -> Vec<f64> {
    let mut out = Vec::new();
    for (w, b) in &g.layers {
        out.extend_from_slice(w);
        out.extend_from_slice(b);
    }
    out
}

fn mlp_layout(m: &Mlp) -> ParamLayout {
    let mut layout = ParamLayout::new();
    for (i, layer) in m.layers.iter().enumerate() {
        layout.push(alloc::format!("layer{i}.weights"), layer.weights.len());
        layout.push(alloc::format!("layer{i}.bias"), layer.biases.len());
    }
    layout
}

/// Trains the score network (same hidden widths as the joint model's
/// predictor, applied directly to covariates) under an independent
/// Bernoulli-probit likelihood with Adam, mini-batches, and early stopping —
/// the same loop shape as the joint model's trainer.
pub fn fit_independent_nn(
    train: &Dataset,
    hidden: &[usize],
    tc: &TrainConfig,
) -> Result<NnFit, TrainError> {
    tc.validate()?;
    let mut dims = vec![train.p()];
    dims.extend_from_slice(hidden);
    dims.push(2);
    let mut init_rng = stream_rng(tc.seed, Stream::Init);
    let mut net = Mlp::glorot(&dims, Activation::Identity, &mut init_rng);
    if tc.max_epochs == 0 {
        return Ok(NnFit { net });
    }
    if train.n() < 2 {
        return Err(TrainError::TooFewObservations {
            required: 2,
            got: train.n(),
        });
    }

    let mut split_rng = stream_rng(tc.seed, Stream::Split);
    let mut order: Vec<usize> = (0..train.n()).collect();
    shuffle(&mut order, &mut split_rng);
    let mut val_count = ((train.n() as f64) * tc.validation_fraction).round() as usize;
    val_count = val_count.clamp(1, train.n() - 1);
    let val_idx: Vec<usize> = order[..val_count].to_vec();
    let mut fit_idx: Vec<usize> = order[val_count..].to_vec();
    // The eps stream is drawn for loop-shape parity with the joint trainer
    // even though this likelihood needs no noise.
    let mut eps_rng = stream_rng(tc.seed, Stream::Eps);

    let nll = |net: &Mlp, idx: &[usize]| -> Result<f64, TrainError> {
        let mut acc = 0.0;
        for &i in idx {
            let (eta, _) = net.forward(train.x_row(i)).map_err(TrainError::Nn)?;
            for l in 0..2 {
                let prob = probit_with_grad(eta[l]).0;
                let y = f64::from(train.y[i][l]);
                acc -= y * prob.ln() + (1.0 - y) * (1.0 - prob).ln();
            }
        }
        Ok(acc / idx.len() as f64)
    };

    let layout = mlp_layout(&net);
    let mut adam = AdamState::new(
        layout.len(),
        AdamConfig {
            learning_rate: tc.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut best = nll(&net, &val_idx)?;
    let mut best_net = net.clone();
    let mut bad = 0usize;
    for _epoch in 1..=tc.max_epochs {
        shuffle(&mut fit_idx, &mut split_rng);
        for chunk in fit_idx.chunks(tc.batch_size) {
            let _ = draw_normals(&mut eps_rng, 0);
            let ds = 1.0 / chunk.len() as f64;
            let mut grads = net.zero_grads();
            for &i in chunk {
                let (eta, cache) = net.forward(train.x_row(i)).map_err(TrainError::Nn)?;
                let mut g_eta = [0.0; 2];
                for l in 0..2 {
                    let (prob, dens) = probit_with_grad(eta[l]);
                    let y = f64::from(train.y[i][l]);
                    g_eta[l] = -ds * dens * (y - prob) / (prob * (1.0 - prob));
                }
                net.backward(&cache, &g_eta, &mut grads).map_err(TrainError::Nn)?;
            }
            let mut flat = mlp_to_flat(&net);
            adam.step(&mut flat, &mlp_grads_to_flat(&grads), &layout)?;
            mlp_set_from_flat(&mut net, &flat);
        }
        let val = nll(&net, &val_idx)?;
        if val < best {
            best = val;
            best_net = net.clone();
            bad = 0;
        } else {
            bad += 1;
            if bad >= tc.patience {
                break;
            }
        }
    }
    Ok(NnFit { net: best_net })
}

/// Rank-based AUC: the probability that a random positive outscores a
/// random negative, with half credit for ties (average-rank Mann–Whitney).
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64, BaselineError> {
    assert_eq!(scores.len(), labels.len(), "scores and labels must align");
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(BaselineError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based average rank of the tie group [i, j].
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Exact two-sided sign test for paired comparisons: ties are dropped by
/// the caller; the p-value is twice the smaller binomial(m, ½) tail,
/// capped at 1.
pub fn sign_test_p(wins: usize, losses: usize) -> f64 {
    let m = wins + losses;
    if m == 0 {
        return 1.0;
    }
    let k = wins.min(losses);
    let mut tail = 0.0;
    let mut coef = 1.0f64; // running C(m, j)
    for j in 0..=k {
        tail += coef;
        coef = coef * (m - j) as f64 / (j + 1) as f64;
    }
    let p = 2.0 * tail * 0.5f64.powi(m as i32);
    p.min(1.0)
}

/// Linear-interpolation quantile of an unsorted sample (the common
/// `(n−1)q` positional rule). Panics on an empty slice.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

/// Median shorthand for [`quantile`] at 0.5.
pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (average ranks for ties). Returns 0 when
/// either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "inputs must align");
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// One row of the benchmark summary: per (cell, variant, outcome) the AUC
/// distribution across seeds plus the sign test against the full model.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    /// Cell identifier from the results table.
    pub cell_id: String,
    /// Variant tag.
    pub variant: String,
    /// Outcome number (1 or 2).
    pub outcome: u8,
    /// Seeds with a successful fit.
    pub n_seeds: usize,
    /// Median AUC across seeds.
    pub median_auc: f64,
    /// First-quartile AUC.
    pub q1_auc: f64,
    /// Third-quartile AUC.
    pub q3_auc: f64,
    /// Two-sided sign-test p-value against the full model, paired by seed
    /// (absent for the full model itself or when pairing is impossible).
    pub sign_test_p_vs_copula: Option<f64>,
}

/// Aggregates sweep rows into per-cell, per-variant, per-outcome medians
/// and quartiles with sign tests against the full model. Rows whose fit
/// failed are skipped; an all-failed (or empty) input is an error.
pub fn benchmark_report(rows: &[AblationRow]) -> Result<Vec<SummaryRow>, BaselineError> {
    type SeedAucs = Vec<(u64, f64, f64)>;
    // Preserve first-appearance order of cells and variants.
    let mut cells: Vec<(String, Vec<(String, SeedAucs)>)> = Vec::new();
    let mut usable = 0usize;
    for row in rows {
        let (Some(a1), Some(a2)) = (row.auc_y1, row.auc_y2) else {
            continue;
        };
        usable += 1;
        let cell = match cells.iter_mut().find(|(id, _)| *id == row.cell_id) {
            Some(c) => c,
            None => {
                cells.push((row.cell_id.clone(), Vec::new()));
                cells.last_mut().expect("just pushed")
            }
        };
        let variant = match cell.1.iter_mut().find(|(v, _)| *v == row.variant) {
            Some(v) => v,
            None => {
                cell.1.push((row.variant.clone(), Vec::new()));
                cell.1.last_mut().expect("just pushed")
            }
        };
        variant.1.push((row.seed, a1, a2));
    }
    if usable == 0 {
        return Err(BaselineError::InsufficientSeeds);
    }

    let full_tag = Variant::VaeCopula.as_str();
    let mut out = Vec::new();
    for (cell_id, variants) in &cells {
        let reference: Option<&SeedAucs> = variants
            .iter()
            .find(|(v, _)| v == full_tag)
            .map(|(_, seeds)| seeds);
        for (variant, seeds) in variants {
            for outcome in [1u8, 2u8] {
                let pick = |entry: &(u64, f64, f64)| if outcome == 1 { entry.1 } else { entry.2 };
                let aucs: Vec<f64> = seeds.iter().map(&pick).collect();
                let sign = if variant == full_tag {
                    None
                } else {
                    reference.map(|ref_seeds| {
                        let mut wins = 0usize;
                        let mut losses = 0usize;
                        for entry in seeds {
                            if let Some(other) =
                                ref_seeds.iter().find(|r| r.0 == entry.0)
                            {
                                let a = pick(entry);
                                let b = pick(other);
                                if a > b {
                                    wins += 1;
                                } else if a < b {
                                    losses += 1;
                                }
                            }
                        }
                        sign_test_p(wins, losses)
                    })
                };
                out.push(SummaryRow {
                    cell_id: cell_id.clone(),
                    variant: variant.clone(),
                    outcome,
                    n_seeds: seeds.len(),
                    median_auc: median(&aucs),
                    q1_auc: quantile(&aucs, 0.25),
                    q3_auc: quantile(&aucs, 0.75),
                    sign_test_p_vs_copula: sign,
                });
            }
        }
    }
    Ok(out)
}
