//! Region adjacency and the conditional-autoregressive Gaussian Markov
//! random field (GMRF) built on it.
//!
//! For an undirected adjacency matrix `A` over `L` regions with degree matrix
//! `D`, the precision matrix is `Q = D − ρA` with `ρ ∈ [0, 1)`. When every
//! region has at least one neighbour, `Q` is strictly diagonally dominant with
//! positive diagonal and therefore positive definite, making the Gaussian
//! prior `N(0, (τQ)⁻¹)` proper. ρ is a fixed configuration constant — it is
//! never learned — so the factorization and `log|Q|` are computed once and
//! cached in a [`PrecisionFactor`].

use alloc::vec;
use alloc::vec::Vec;
// Required for float math in no_std builds; when a dependency links std,
// method calls resolve to the inherent f64 methods instead.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg;

/// Errors produced by graph construction and GMRF evaluation.
#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    /// A region with no neighbours makes the prior improper.
    #[error("region {0} has no neighbours; the autoregressive prior is improper for isolated regions")]
    IsolatedRegion(usize),
    /// An edge endpoint fell outside `[0, L)`, was a self-loop, or repeated.
    #[error("invalid edge ({0}, {1}): {2}")]
    BadEdge(usize, usize, &'static str),
    /// The autocorrelation parameter must lie in `[0, 1)`.
    #[error("rho must lie in [0, 1), got {0}")]
    BadRho(f64),
    /// At least two regions are required.
    #[error("need at least 2 regions, got {0}")]
    TooFewRegions(usize),
    /// A vector argument had the wrong length.
    #[error("expected a vector of length {expected}, got {got}")]
    DimensionMismatch {
        /// Required length (the number of regions).
        expected: usize,
        /// Length actually supplied.
        got: usize,
    },
    /// Factorization hit a non-positive pivot.
    #[error("precision matrix is not positive definite (pivot {0} <= 0)")]
    NotPositiveDefinite(usize),
}

/// Undirected region adjacency together with the fixed autocorrelation ρ.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpatialGraph {
    l: usize,
    edges: Vec<(usize, usize)>,
    degrees: Vec<usize>,
    rho: f64,
}

impl SpatialGraph {
    /// Builds a graph over `l` regions from an undirected edge list.
    ///
    /// Edges are stored with endpoints ordered `(min, max)`. Self-loops,
    /// duplicate edges, and out-of-range endpoints are rejected. Regions with
    /// degree zero are permitted here (the generators below avoid them) but
    /// are rejected by [`build_precision`].
    pub fn new(l: usize, edges: &[(usize, usize)], rho: f64) -> Result<Self, GraphError> {
        if l < 2 {
            return Err(GraphError::TooFewRegions(l));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(GraphError::BadRho(rho));
        }
        let mut normalized: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b {
                return Err(GraphError::BadEdge(a, b, "self-loop"));
            }
            if a >= l || b >= l {
                return Err(GraphError::BadEdge(a, b, "endpoint out of range"));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        for w in normalized.windows(2) {
            if w[0] == w[1] {
                return Err(GraphError::BadEdge(w[0].0, w[0].1, "duplicate edge"));
            }
        }
        let mut degrees = vec![0usize; l];
        for &(a, b) in &normalized {
            degrees[a] += 1;
            degrees[b] += 1;
        }
        Ok(Self {
            l,
            edges: normalized,
            degrees,
            rho,
        })
    }

    /// Four-neighbour lattice with `rows × cols` regions, numbered row-major.
    pub fn grid(rows: usize, cols: usize, rho: f64) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                if c + 1 < cols {
                    edges.push((i, i + 1));
                }
                if r + 1 < rows {
                    edges.push((i, i + cols));
                }
            }
        }
        Self::new(rows * cols, &edges, rho)
    }

    /// Random geometric graph: `l` points dropped uniformly on the unit
    /// square, linking every pair within `radius`. Any point left isolated is
    /// linked to its nearest neighbour so the prior stays proper.
    pub fn geometric<R: Rng>(
        l: usize,
        radius: f64,
        rho: f64,
        rng: &mut R,
    ) -> Result<Self, GraphError> {
        if l < 2 {
            return Err(GraphError::TooFewRegions(l));
        }
        let pts: Vec<(f64, f64)> = (0..l).map(|_| (rng.random(), rng.random())).collect();
        let dist2 = |i: usize, j: usize| {
            let dx = pts[i].0 - pts[j].0;
            let dy = pts[i].1 - pts[j].1;
            dx * dx + dy * dy
        };
        let r2 = radius * radius;
        let mut edges = Vec::new();
        let mut degrees = vec![0usize; l];
        for i in 0..l {
            for j in (i + 1)..l {
                if dist2(i, j) <= r2 {
                    edges.push((i, j));
                    degrees[i] += 1;
                    degrees[j] += 1;
                }
            }
        }
        for i in 0..l {
            if degrees[i] == 0 {
                let mut best = usize::MAX;
                let mut best_d = f64::INFINITY;
                for j in 0..l {
                    if j != i && dist2(i, j) < best_d {
                        best_d = dist2(i, j);
                        best = j;
                    }
                }
                edges.push((i.min(best), i.max(best)));
                degrees[i] += 1;
                degrees[best] += 1;
            }
        }
        // The nearest-neighbour patch can duplicate an existing edge only if
        // the partner was itself isolated and picked `i`; dedup handles it.
        edges.sort_unstable();
        edges.dedup();
        Self::new(l, &edges, rho)
    }

    /// Number of regions.
    pub fn len(&self) -> usize {
        self.l
    }

    /// True when the graph has no regions (never, by construction).
    pub fn is_empty(&self) -> bool {
        self.l == 0
    }

    /// The undirected edges, each stored as `(low, high)`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Neighbour counts per region (the diagonal of `D`).
    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    /// The fixed autocorrelation ρ.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Neighbours of region `j` (linear scan; graphs here are small).
    pub fn neighbours(&self, j: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for &(a, b) in &self.edges {
            if a == j {
                out.push(b);
            } else if b == j {
                out.push(a);
            }
        }
        out
    }

    /// Materializes the dense precision matrix `Q = D − ρA`, row-major L×L.
    pub fn dense_precision(&self) -> Vec<f64> {
        let l = self.l;
        let mut q = vec![0.0; l * l];
        for j in 0..l {
            q[j * l + j] = self.degrees[j] as f64;
        }
        for &(a, b) in &self.edges {
            q[a * l + b] = -self.rho;
            q[b * l + a] = -self.rho;
        }
        q
    }

    /// Accumulates `y += scale · Q·x` without materializing `Q`.
    pub(crate) fn precision_product_into(&self, x: &[f64], scale: f64, y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.l);
        debug_assert_eq!(y.len(), self.l);
        for j in 0..self.l {
            y[j] += scale * self.degrees[j] as f64 * x[j];
        }
        let srho = scale * self.rho;
        for &(a, b) in &self.edges {
            y[a] -= srho * x[b];
            y[b] -= srho * x[a];
        }
    }
}

/// Cached Cholesky factorization of `Q` plus its log-determinant.
///
/// `lower() · lower()ᵀ` reconstructs `Q`; the factor is immutable after
/// construction and safe to share read-only.
#[derive(Clone, Debug)]
pub struct PrecisionFactor {
    l: usize,
    lower: Vec<f64>,
    log_det: f64,
}

impl PrecisionFactor {
    /// Number of regions.
    pub fn len(&self) -> usize {
        self.l
    }

    /// True when the factor is empty (never, by construction).
    pub fn is_empty(&self) -> bool {
        self.l == 0
    }

    /// The lower-triangular Cholesky factor of `Q`, row-major L×L.
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    /// `log|Q|`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Solves `Q·x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, GraphError> {
        if b.len() != self.l {
            return Err(GraphError::DimensionMismatch {
                expected: self.l,
                got: b.len(),
            });
        }
        Ok(linalg::solve_spd(&self.lower, self.l, b))
    }
}

/// Factorizes `Q = D − ρA` and caches `log|Q|`.
///
/// Requires every region to have at least one neighbour; a degree-0 region
/// makes the prior improper and is reported as [`GraphError::IsolatedRegion`].
pub fn build_precision(graph: &SpatialGraph) -> Result<PrecisionFactor, GraphError> {
    if let Some(j) = graph.degrees.iter().position(|&d| d == 0) {
        return Err(GraphError::IsolatedRegion(j));
    }
    let l = graph.len();
    let q = graph.dense_precision();
    let lower = linalg::cholesky(&q, l).map_err(GraphError::NotPositiveDefinite)?;
    let mut log_det = 0.0;
    for j in 0..l {
        log_det += lower[j * l + j].ln();
    }
    Ok(PrecisionFactor {
        l,
        lower,
        log_det: 2.0 * log_det,
    })
}

/// Log-density of `N(0, (τQ)⁻¹)` at `mu_k`:
/// `½·L·log τ + ½·log|Q| − (L/2)·log 2π − (τ/2)·μᵀQμ`.
///
/// `tau` must be strictly positive.
pub fn gmrf_logpdf(mu_k: &[f64], factor: &PrecisionFactor, tau: f64) -> Result<f64, GraphError> {
    assert!(tau > 0.0, "tau must be positive");
    let l = factor.l;
    if mu_k.len() != l {
        return Err(GraphError::DimensionMismatch {
            expected: l,
            got: mu_k.len(),
        });
    }
    // μᵀQμ = ‖Lᵀμ‖² from the cached factor.
    let mut quad = 0.0;
    for i in 0..l {
        let mut w = 0.0;
        for j in i..l {
            w += factor.lower[j * l + i] * mu_k[j];
        }
        quad += w * w;
    }
    let lf = l as f64;
    Ok(0.5 * lf * tau.ln() + 0.5 * factor.log_det
        - 0.5 * lf * (2.0 * core::f64::consts::PI).ln()
        - 0.5 * tau * quad)
}

/// Draws one sample with covariance `(τQ)⁻¹` by backsolving the transposed
/// factor against standard normal noise and scaling by `τ^{−1/2}`.
pub fn gmrf_sample<R: Rng>(factor: &PrecisionFactor, tau: f64, rng: &mut R) -> Vec<f64> {
    assert!(tau > 0.0, "tau must be positive");
    let l = factor.l;
    let eps: Vec<f64> = (0..l).map(|_| StandardNormal.sample(rng)).collect();
    // Lᵀx = ε gives cov(x) = (L Lᵀ)⁻¹ = Q⁻¹.
    let mut x = linalg::solve_lower_transpose(&factor.lower, l, &eps);
    let scale = 1.0 / tau.sqrt();
    for v in &mut x {
        *v *= scale;
    }
    x
}

/// Evaluates `μᵀQμ` edgewise without materializing `Q`:
/// `Σ_j deg(j)·μ_j² − 2ρ·Σ_{(i,j)∈edges} μ_i·μ_j`.
pub fn quadratic_form(mu_k: &[f64], graph: &SpatialGraph) -> Result<f64, GraphError> {
    if mu_k.len() != graph.l {
        return Err(GraphError::DimensionMismatch {
            expected: graph.l,
            got: mu_k.len(),
        });
    }
    let mut diag = 0.0;
    for j in 0..graph.l {
        diag += graph.degrees[j] as f64 * mu_k[j] * mu_k[j];
    }
    let mut cross = 0.0;
    for &(a, b) in &graph.edges {
        cross += mu_k[a] * mu_k[b];
    }
    Ok(diag - 2.0 * graph.rho * cross)
}
