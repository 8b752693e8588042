//! Bivariate Gumbel copula: CDF, joint Bernoulli cell probabilities,
//! dependence summaries, exact sampling, and the analytic partial derivatives
//! used by gradient-based training.
//!
//! The copula is `C_α(p₁, p₂) = exp(−[(−log p₁)^α + (−log p₂)^α]^{1/α})` with
//! `α ≥ 1`; `α = 1` is independence and `α → ∞` the comonotone limit. All
//! evaluation happens in log space: with `a = −log p₁`, `b = −log p₂` the
//! bracket is computed as `log s = α·max(log a, log b) + log1p(r)` where
//! `r = exp(α·(min − max)) ∈ (0, 1]`, which stays finite for the entire
//! admissible range (marginals clamped to `[1e−6, 1 − 1e−6]`, `α ≤ 50`).

// Required for float math in no_std builds; when a dependency links std,
// method calls resolve to the inherent f64 methods instead.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01};

/// Marginal probabilities entering the copula are pushed inside
/// `[PROB_CLAMP, 1 − PROB_CLAMP]`: `(−log p)^α` overflows and its gradient
/// explodes at the boundary.
pub const PROB_CLAMP: f64 = 1e-6;

/// Joint cells are floored at this value and renormalized so the four-cell
/// distribution stays proper and strictly positive.
pub const CELL_FLOOR: f64 = 1e-12;

/// Smallest admissible dependence parameter for gradient-based fitting;
/// exactly 1 is reserved for the explicit independence variant.
pub const ALPHA_MIN: f64 = 1.0 + 1e-6;

/// Ceiling on the dependence parameter: beyond this the copula is numerically
/// comonotone and gradients vanish.
pub const ALPHA_MAX: f64 = 50.0;

/// Clamps a marginal probability into the admissible open interval.
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Clamps a trainable dependence parameter into `[ALPHA_MIN, ALPHA_MAX]`.
pub fn clamp_alpha(alpha: f64) -> f64 {
    alpha.clamp(ALPHA_MIN, ALPHA_MAX)
}

/// The four joint probabilities of a paired binary outcome.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CellProbs {
    /// P(Y₁=1, Y₂=1).
    pub p11: f64,
    /// P(Y₁=1, Y₂=0).
    pub p10: f64,
    /// P(Y₁=0, Y₂=1).
    pub p01: f64,
    /// P(Y₁=0, Y₂=0).
    pub p00: f64,
}

impl CellProbs {
    /// Cells in the fixed order (p11, p10, p01, p00).
    pub fn as_array(&self) -> [f64; 4] {
        [self.p11, self.p10, self.p01, self.p00]
    }

    /// Marginal P(Y₁=1) = p11 + p10.
    pub fn marginal1(&self) -> f64 {
        self.p11 + self.p10
    }

    /// Marginal P(Y₂=1) = p11 + p01.
    pub fn marginal2(&self) -> f64 {
        self.p11 + self.p01
    }

    /// The cell selected by an outcome pattern.
    pub fn pattern(&self, y1: u8, y2: u8) -> f64 {
        self.as_array()[cell_index(y1, y2)]
    }
}

/// Maps an outcome pair to its index in the (p11, p10, p01, p00) order.
pub fn cell_index(y1: u8, y2: u8) -> usize {
    match (y1 != 0, y2 != 0) {
        (true, true) => 0,
        (true, false) => 1,
        (false, true) => 2,
        (false, false) => 3,
    }
}

/// Log-space intermediates shared by the CDF and its partials.
struct LogBracket {
    /// a = −log p₁ after clamping, and its log.
    a: f64,
    la: f64,
    b: f64,
    lb: f64,
    /// log s where s = a^α + b^α.
    ln_s: f64,
    /// t = s^{1/α}.
    t: f64,
    /// C = exp(−t).
    c: f64,
}

fn bracket(p1: f64, p2: f64, alpha: f64) -> LogBracket {
    let a = -p1.ln();
    let b = -p2.ln();
    let la = a.ln();
    let lb = b.ln();
    let (hi, lo) = if la >= lb { (la, lb) } else { (lb, la) };
    let r = (alpha * (lo - hi)).exp(); // in (0, 1]
    let ln_s = alpha * hi + r.ln_1p();
    let t = (ln_s / alpha).exp();
    LogBracket {
        a,
        la,
        b,
        lb,
        ln_s,
        t,
        c: (-t).exp(),
    }
}

/// Gumbel copula CDF `C_α(p₁, p₂)`.
///
/// Boundary arguments short-circuit exactly (`p₂ = 1` returns `p₁`, a zero
/// marginal returns 0); interior arguments are clamped per [`PROB_CLAMP`] and
/// `α` is clamped into `[1, ALPHA_MAX]`. NaN inputs are rejected.
pub fn cdf(p1: f64, p2: f64, alpha: f64) -> f64 {
    assert!(
        !p1.is_nan() && !p2.is_nan() && !alpha.is_nan(),
        "NaN input to copula cdf"
    );
    if p1 <= 0.0 || p2 <= 0.0 {
        return 0.0;
    }
    if p2 >= 1.0 {
        return p1.min(1.0);
    }
    if p1 >= 1.0 {
        return p2;
    }
    let alpha = alpha.clamp(1.0, ALPHA_MAX);
    bracket(clamp_prob(p1), clamp_prob(p2), alpha).c
}

/// Upper-tail dependence coefficient `2 − 2^{1/α}`.
pub fn upper_tail_dependence(alpha: f64) -> f64 {
    2.0 - 2.0f64.powf(1.0 / alpha)
}

/// Kendall rank correlation implied by the copula: `1 − 1/α`.
pub fn kendall_tau(alpha: f64) -> f64 {
    1.0 - 1.0 / alpha
}

/// Raw (pre-floor) cells and their derivative stamps w.r.t. (p₁, p₂, α).
pub(crate) struct CellWorkspace {
    /// Floored cell masses, before normalization.
    pub m: [f64; 4],
    /// Sum of the floored masses.
    pub sum: f64,
    /// d m_j / d(p₁, p₂, α); zero where the floor is active.
    pub dm: [[f64; 3]; 4],
}

impl CellWorkspace {
    /// Normalized cells.
    pub fn cells(&self) -> CellProbs {
        CellProbs {
            p11: self.m[0] / self.sum,
            p10: self.m[1] / self.sum,
            p01: self.m[2] / self.sum,
            p00: self.m[3] / self.sum,
        }
    }

    /// log of the normalized cell `idx`.
    pub fn log_cell(&self, idx: usize) -> f64 {
        self.m[idx].ln() - self.sum.ln()
    }

    /// d log(cell idx) / d(p₁, p₂, α), including the renormalization term.
    pub fn dlog_cell(&self, idx: usize) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (t, o) in out.iter_mut().enumerate() {
            let mut dsum = 0.0;
            for j in 0..4 {
                dsum += self.dm[j][t];
            }
            *o = self.dm[idx][t] / self.m[idx] - dsum / self.sum;
        }
        out
    }
}

/// Computes the floored cell masses and their partials. Marginals are clamped
/// here; `alpha` is clamped into `[1, ALPHA_MAX]`.
pub(crate) fn cell_workspace(p1: f64, p2: f64, alpha: f64) -> CellWorkspace {
    assert!(
        !p1.is_nan() && !p2.is_nan() && !alpha.is_nan(),
        "NaN input to cell probabilities"
    );
    let alpha = alpha.clamp(1.0, ALPHA_MAX);
    let p1 = clamp_prob(p1);
    let p2 = clamp_prob(p2);
    let lb = bracket(p1, p2, alpha);
    let (c, dc1, dc2, dca) = bracket_partials(&lb, alpha);
    let raw = [c, p1 - c, p2 - c, 1.0 - p1 - p2 + c];
    let draw = [
        [dc1, dc2, dca],
        [1.0 - dc1, -dc2, -dca],
        [-dc1, 1.0 - dc2, -dca],
        [dc1 - 1.0, dc2 - 1.0, dca],
    ];
    let mut m = [0.0; 4];
    let mut dm = [[0.0; 3]; 4];
    let mut sum = 0.0;
    for j in 0..4 {
        if raw[j] >= CELL_FLOOR {
            m[j] = raw[j];
            dm[j] = draw[j];
        } else {
            m[j] = CELL_FLOOR;
        }
        sum += m[j];
    }
    CellWorkspace { m, sum, dm }
}

/// Closed-form partials of the CDF evaluated from shared log intermediates.
///
/// * `∂C/∂p₁ = C · s^{1/α−1} · a^{α−1} / p₁`, evaluated as
///   `exp(−t + (1/α − 1)·log s + (α − 1)·log a + a)`;
/// * `∂C/∂α = −C·t·(m̄ − log s/α)/α` where `m̄ = (a^α·log a + b^α·log b)/s`
///   is the s-weighted mean of the logs.
fn bracket_partials(lb: &LogBracket, alpha: f64) -> (f64, f64, f64, f64) {
    let inv_alpha = 1.0 / alpha;
    let d1 = (-lb.t + (inv_alpha - 1.0) * lb.ln_s + (alpha - 1.0) * lb.la + lb.a).exp();
    let d2 = (-lb.t + (inv_alpha - 1.0) * lb.ln_s + (alpha - 1.0) * lb.lb + lb.b).exp();
    // Weights a^α/s and b^α/s from the same stable ordering used for log s.
    let (hi_log, lo_log) = if lb.la >= lb.lb {
        (lb.la, lb.lb)
    } else {
        (lb.lb, lb.la)
    };
    let r = (alpha * (lo_log - hi_log)).exp();
    let w_hi = 1.0 / (1.0 + r);
    let w_lo = r / (1.0 + r);
    let mean_log = w_hi * hi_log + w_lo * lo_log;
    let da = -lb.c * lb.t * (mean_log - lb.ln_s * inv_alpha) * inv_alpha;
    (lb.c, d1, d2, da)
}

/// Partial derivatives `(∂C/∂p₁, ∂C/∂p₂, ∂C/∂α)` of the CDF.
///
/// Inputs are clamped like [`cdf`]; intended for strictly interior arguments
/// with `α ≥ ALPHA_MIN`.
pub fn cdf_partials(p1: f64, p2: f64, alpha: f64) -> (f64, f64, f64) {
    assert!(
        !p1.is_nan() && !p2.is_nan() && !alpha.is_nan(),
        "NaN input to copula partials"
    );
    let alpha = alpha.clamp(1.0, ALPHA_MAX);
    let lb = bracket(clamp_prob(p1), clamp_prob(p2), alpha);
    let (_, d1, d2, da) = bracket_partials(&lb, alpha);
    (d1, d2, da)
}

/// The four joint Bernoulli cells implied by marginals `(p₁, p₂)` under the
/// copula: `p11 = C_α(p₁,p₂)`, `p10 = p₁ − p11`, `p01 = p₂ − p11`,
/// `p00 = 1 − p11 − p10 − p01`, floored at [`CELL_FLOOR`] and renormalized.
pub fn cell_probs(p1: f64, p2: f64, alpha: f64) -> CellProbs {
    cell_workspace(p1, p2, alpha).cells()
}

/// Log-probability of one observed outcome pair under pre-built cells, using
/// the exponent-selector form
/// `p11^{y₁y₂}·p10^{y₁(1−y₂)}·p01^{(1−y₁)y₂}·p00^{(1−y₁)(1−y₂)}`.
pub fn log_joint_bernoulli(y1: u8, y2: u8, cells: &CellProbs) -> f64 {
    cells.as_array()[cell_index(y1, y2)].ln()
}

/// Draws one pair `(U₁, U₂) ~ C_α` by the Archimedean frailty construction:
/// `V` positive stable with index `1/α` via the Chambers–Mallows–Stuck
/// formula, `E₁, E₂` standard exponential, `U_i = exp(−(E_i/V)^{1/α})`.
///
/// At `α = 1` the stable factor degenerates to the constant 1 (the formula
/// evaluates `0⁰ = 1`), giving independent uniforms with no special casing.
pub fn sample_pair<R: Rng>(alpha: f64, rng: &mut R) -> (f64, f64) {
    let alpha = alpha.clamp(1.0, ALPHA_MAX);
    let beta = 1.0 / alpha;
    let theta: f64 = {
        let u: f64 = Open01.sample(rng);
        core::f64::consts::PI * u
    };
    let w: f64 = Exp1.sample(rng);
    let one_minus = 1.0 - beta;
    let v = ((one_minus * theta).sin() / w).powf(one_minus / beta) * (beta * theta).sin()
        / theta.sin().powf(1.0 / beta);
    let e1: f64 = Exp1.sample(rng);
    let e2: f64 = Exp1.sample(rng);
    let u1 = (-(e1 / v).powf(beta)).exp();
    let u2 = (-(e2 / v).powf(beta)).exp();
    // Guard the measure-zero endpoints so callers can take logs freely.
    let squeeze = |u: f64| u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
    (squeeze(u1), squeeze(u2))
}

/// Empirical Kendall τ of continuous pairs in O(n log n) via merge-sort
/// inversion counting. Ties have probability zero for the samplers this
/// diagnoses and receive no special handling.
pub fn empirical_kendall_tau(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len();
    assert!(n >= 2, "need at least two pairs");
    let mut sorted: alloc::vec::Vec<(f64, f64)> = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut seq: alloc::vec::Vec<f64> = sorted.iter().map(|p| p.1).collect();
    let mut buf = seq.clone();
    let inversions = count_inversions(&mut seq, &mut buf);
    let total = n as f64 * (n as f64 - 1.0) / 2.0;
    1.0 - 2.0 * inversions as f64 / total
}

fn count_inversions(seq: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = seq.len();
    if n <= 1 {
        return 0;
    }
    let mid = n / 2;
    let (left, right) = seq.split_at_mut(mid);
    let mut inv = count_inversions(left, &mut buf[..mid]) + count_inversions(right, &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, 0, 0);
    while i < left.len() && j < right.len() {
        if left[i] <= right[j] {
            buf[k] = left[i];
            i += 1;
        } else {
            inv += (left.len() - i) as u64;
            buf[k] = right[j];
            j += 1;
        }
        k += 1;
    }
    buf[k..k + left.len() - i].copy_from_slice(&left[i..]);
    buf[k + left.len() - i..n].copy_from_slice(&right[j..]);
    seq.copy_from_slice(&buf[..n]);
    inv
}
