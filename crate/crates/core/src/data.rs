//! In-memory dataset representation: a dense covariate matrix, paired binary
//! outcomes, and per-observation region labels, plus per-feature
//! standardization fitted on training data and replayed on held-out data.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
// Required for float math in no_std builds; when a dependency links std,
// method calls resolve to the inherent f64 methods instead.
#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

/// Errors raised while assembling a dataset.
#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    /// Rows and outcome/region vectors disagree on the observation count.
    #[error("inconsistent lengths: {0} covariate rows, {1} outcomes, {2} region labels")]
    InconsistentLengths(usize, usize, usize),
    /// A region label was outside `0..n_regions`.
    #[error("observation {observation} has region {region} but only {n_regions} regions exist")]
    RegionOutOfRange {
        /// Offending row.
        observation: usize,
        /// Label found.
        region: usize,
        /// Number of regions declared.
        n_regions: usize,
    },
    /// A covariate entry was NaN or infinite.
    #[error("non-finite covariate at observation {observation}, feature {feature}")]
    NonFiniteCovariate {
        /// Offending row.
        observation: usize,
        /// Offending column.
        feature: usize,
    },
    /// The feature-name list disagrees with the covariate width.
    #[error("{names} feature names for {features} features")]
    NameCountMismatch {
        /// Names supplied.
        names: usize,
        /// Actual feature count.
        features: usize,
    },
    /// The dataset has no observations.
    #[error("dataset is empty")]
    Empty,
}

/// Per-feature affine transform `x → (x − mean) / sd` fitted on one dataset
/// and replayable on another.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Standardization {
    /// Column means.
    pub mean: Vec<f64>,
    /// Column sample standard deviations; constant columns get 1 so the
    /// transform is a pure shift instead of a division by zero.
    pub sd: Vec<f64>,
}

impl Standardization {
    /// Fits means and sample standard deviations on the rows of `x`
    /// (row-major, `n` × `p`).
    pub fn fit(x: &[f64], n: usize, p: usize) -> Self {
        assert_eq!(x.len(), n * p, "matrix shape mismatch");
        assert!(n > 0, "cannot standardize an empty matrix");
        let mut mean = vec![0.0; p];
        for row in x.chunks_exact(p) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut sd = vec![0.0; p];
        if n > 1 {
            for row in x.chunks_exact(p) {
                for ((s, v), m) in sd.iter_mut().zip(row).zip(&mean) {
                    let d = v - m;
                    *s += d * d;
                }
            }
            for s in &mut sd {
                *s = (*s / (n - 1) as f64).sqrt();
            }
        }
        for s in &mut sd {
            if *s <= 0.0 || !s.is_finite() {
                *s = 1.0;
            }
        }
        Self { mean, sd }
    }

    /// Number of features the transform covers.
    pub fn p(&self) -> usize {
        self.mean.len()
    }

    /// Transforms one matrix in place (row-major, width must match).
    pub fn apply(&self, x: &mut [f64]) {
        let p = self.p();
        assert_eq!(x.len() % p.max(1), 0, "matrix width mismatch");
        for row in x.chunks_exact_mut(p) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.sd) {
                *v = (*v - m) / s;
            }
        }
    }

    /// Transforms a single raw value from feature `feature`.
    pub fn standardize_value(&self, feature: usize, raw: f64) -> f64 {
        (raw - self.mean[feature]) / self.sd[feature]
    }
}

/// A dataset of `n` observations: covariates (row-major `n` × `p`), paired
/// binary outcomes, and region labels in `0..n_regions`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dataset {
    /// Covariates, row-major `n` × `p`.
    pub x: Vec<f64>,
    /// Outcome pairs, each entry 0 or 1.
    pub y: Vec<[u8; 2]>,
    /// Region label per observation.
    pub region: Vec<usize>,
    /// Total number of regions (must exceed every label).
    pub n_regions: usize,
    /// Column names, same order as the columns of `x`.
    pub feature_names: Vec<String>,
    /// The transform already applied to `x`, if any. `None` means `x` holds
    /// raw values.
    pub standardization: Option<Standardization>,
}

impl Dataset {
    /// Validates shapes and labels and assembles a dataset of raw covariates.
    pub fn new(
        x: Vec<f64>,
        y: Vec<[u8; 2]>,
        region: Vec<usize>,
        n_regions: usize,
        feature_names: Vec<String>,
    ) -> Result<Self, DataError> {
        let n = y.len();
        if n == 0 {
            return Err(DataError::Empty);
        }
        let p = feature_names.len();
        if region.len() != n || (p > 0 && x.len() != n * p) || (p == 0 && !x.is_empty()) {
            return Err(DataError::InconsistentLengths(
                if p > 0 { x.len() / p } else { 0 },
                n,
                region.len(),
            ));
        }
        for (i, &r) in region.iter().enumerate() {
            if r >= n_regions {
                return Err(DataError::RegionOutOfRange {
                    observation: i,
                    region: r,
                    n_regions,
                });
            }
        }
        for (i, row) in x.chunks_exact(p.max(1)).enumerate() {
            if p == 0 {
                break;
            }
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(DataError::NonFiniteCovariate {
                        observation: i,
                        feature: j,
                    });
                }
            }
        }
        Ok(Self {
            x,
            y,
            region,
            n_regions,
            feature_names,
            standardization: None,
        })
    }

    /// Number of observations.
    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of covariates.
    pub fn p(&self) -> usize {
        self.feature_names.len()
    }

    /// Covariate row `i`.
    pub fn x_row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.x[i * p..(i + 1) * p]
    }

    /// Column index of a named feature.
    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    /// A new dataset holding the given observation indices, in order.
    /// Indices may repeat (bootstrap resamples). Region count, names, and
    /// standardization metadata are carried over.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let p = self.p();
        let mut x = Vec::with_capacity(indices.len() * p);
        let mut y = Vec::with_capacity(indices.len());
        let mut region = Vec::with_capacity(indices.len());
        for &i in indices {
            x.extend_from_slice(self.x_row(i));
            y.push(self.y[i]);
            region.push(self.region[i]);
        }
        Self {
            x,
            y,
            region,
            n_regions: self.n_regions,
            feature_names: self.feature_names.clone(),
            standardization: self.standardization.clone(),
        }
    }

    /// Fits standardization on this dataset's covariates, applies it in
    /// place, and records it. No-op on width-zero data.
    pub fn standardize_in_place(&mut self) -> Standardization {
        let st = Standardization::fit(&self.x, self.n(), self.p());
        st.apply(&mut self.x);
        self.standardization = Some(st.clone());
        st
    }

    /// Applies an existing transform in place and records it.
    pub fn apply_standardization(&mut self, st: &Standardization) {
        assert_eq!(st.p(), self.p(), "standardization width mismatch");
        st.apply(&mut self.x);
        self.standardization = Some(st.clone());
    }
}
