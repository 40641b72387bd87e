//! Model pieces: design matrices, the ridge-regularized Gram matrix,
//! hyperparameter defaults and (log-)densities of prior and likelihood.
//!
//! The prior is
//!
//! ```text
//! μ | σ²        ~ N(0, v0 σ²)
//! β* | σ², m, ℓ ~ N_K(0, n σ² (G + v λ_max(G) I)^{-1}),   G = XᵀX
//! π(σ²)         ∝ 1/σ²
//! m_k           ~ Unif(grid points)
//! ℓ_k | m_k     ~ Γ(a, b) restricted to the admissible half-lengths of m_k
//! ```
//!
//! where `X` is the `n × K` matrix of curve means over the K intervals.
//! Centers live on the grid and half-lengths are distances from the center
//! to another grid point, so that the prior and the Gibbs sampler share one
//! finite state space.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::FunctionalDataset;
use crate::error::{BlissError, Result};
use crate::estimate::{alpha_from_supports, AlphaCurve};
use crate::grid::{partial_mean, Span, TimeGrid};
use crate::intervals::IntervalSet;
use crate::linalg;
use crate::rng::rng_from_seed;
use crate::step::{realize_interval, StepFunction};

/// Diagonal used in place of the ridge when the design is identically zero.
pub const ZERO_DESIGN_RIDGE: f64 = 1.490_116_119_384_765_6e-8; // sqrt(f64::EPSILON)

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Number of intervals in the prior.
    pub k: usize,
    /// Gamma shape for half-lengths.
    pub a: f64,
    /// Gamma rate for half-lengths.
    pub b: f64,
    /// Ridge factor: `η = v λ_max(G)`.
    pub v: f64,
    /// Intercept prior variance factor.
    pub v0: f64,
    /// Weight of the support loss.
    pub gamma: f64,
    /// Maximum number of pieces of the stepwise estimate.
    pub k0: usize,
    /// Minimum piece length of the stepwise estimate.
    pub epsilon: f64,
}

impl Hyperparameters {
    pub fn validate(&self, domain: &Span) -> Result<()> {
        let bad = |msg: String| Err(BlissError::InvalidParameter(msg));
        if self.k < 1 {
            return bad("K must be at least 1".into());
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return bad(format!("a must be positive, got {}", self.a));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return bad(format!("b must be positive, got {}", self.b));
        }
        if !(self.v > 0.0 && self.v.is_finite()) {
            return bad(format!("v must be positive, got {}", self.v));
        }
        if !(self.v0 > 0.0 && self.v0.is_finite()) {
            return bad(format!("v0 must be positive, got {}", self.v0));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if self.k0 < 1 {
            return bad("K0 must be at least 1".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < domain.len()) {
            return bad(format!(
                "epsilon must lie in (0, {}), got {}",
                domain.len(),
                self.epsilon
            ));
        }
        Ok(())
    }
}

/// One point `θ = (m, ℓ, β*, μ, σ²)` of the parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamState {
    pub centers: Vec<f64>,
    pub half_lengths: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub variance: f64,
}

impl ParamState {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    /// `3K + 2`.
    pub fn dimension(&self) -> usize {
        3 * self.k() + 2
    }

    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        let k = self.centers.len();
        if k == 0 || self.half_lengths.len() != k || self.coefficients.len() != k {
            return Err(BlissError::DimensionMismatch(format!(
                "state has {} centers, {} half-lengths, {} coefficients",
                k,
                self.half_lengths.len(),
                self.coefficients.len()
            )));
        }
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(BlissError::InvalidParameter(format!(
                "variance must be positive, got {}",
                self.variance
            )));
        }
        let domain = grid.domain();
        let min_len = grid.min_step() - grid.tolerance();
        for (&m, &l) in self.centers.iter().zip(&self.half_lengths) {
            if !domain.contains(m) {
                return Err(BlissError::OutsideDomain {
                    value: m,
                    start: domain.start,
                    end: domain.end,
                });
            }
            if l < min_len {
                return Err(BlissError::InvalidParameter(format!(
                    "half-length {l} is below one grid step"
                )));
            }
        }
        let finite = self.coefficients.iter().all(|b| b.is_finite()) && self.intercept.is_finite();
        if !finite {
            return Err(BlissError::NonFinite("state coefficients".into()));
        }
        Ok(())
    }

    /// Realized intervals, with endpoints snapped onto nearby grid points.
    pub fn spans(&self, grid: &TimeGrid) -> Result<Vec<Span>> {
        self.centers
            .iter()
            .zip(&self.half_lengths)
            .map(|(&m, &l)| realize_on_grid(grid, m, l))
            .collect()
    }

    pub fn step_function(&self, grid: &TimeGrid) -> Result<StepFunction> {
        StepFunction::new(self.spans(grid)?, self.coefficients.clone())
    }

    /// Union of the intervals with nonzero coefficient.
    pub fn support(&self, grid: &TimeGrid) -> Result<IntervalSet> {
        Ok(crate::step::support_of(&self.step_function(grid)?))
    }
}

/// Realizes `[m - ℓ, m + ℓ] ∩ 𝒯` and snaps endpoints within tolerance of a
/// grid point onto it, so that grid-aligned intervals compare exactly.
pub fn realize_on_grid(grid: &TimeGrid, center: f64, half_length: f64) -> Result<Span> {
    let s = realize_interval(center, half_length, &grid.domain())?;
    Ok(Span::new(grid.snap(s.start), grid.snap(s.end)))
}

/// One admissible half-length for a given center.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeEntry {
    pub half_length: f64,
    /// Realized interval.
    pub span: Span,
    /// Grid indices of the realized endpoints clipped to the grid span,
    /// when they are grid points.
    pub start_index: Option<usize>,
    pub end_index: Option<usize>,
    /// `log π(ℓ | m)` under the renormalized discrete Gamma prior.
    pub log_prior: f64,
}

/// The finite state space of one interval: centers on the grid, and for each
/// center the half-lengths reaching another grid point.
#[derive(Debug, Clone)]
pub struct IntervalLattice {
    grid: TimeGrid,
    entries: Vec<Vec<LatticeEntry>>,
}

impl IntervalLattice {
    pub fn new(grid: &TimeGrid, a: f64, b: f64) -> Result<Self> {
        let t = grid.points();
        let tol = grid.tolerance();
        let observed = grid.span();
        let mut entries = Vec::with_capacity(t.len());
        for (c, &m) in t.iter().enumerate() {
            let mut lengths: Vec<f64> = t
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != c)
                .map(|(_, &tj)| (tj - m).abs())
                .collect();
            lengths.sort_by(f64::total_cmp);
            lengths.dedup_by(|x, y| (*x - *y).abs() <= tol);

            let mut row = Vec::with_capacity(lengths.len());
            for l in lengths {
                let span = realize_on_grid(grid, m, l)?;
                let clipped = span.intersect(&observed).unwrap_or(span);
                row.push(LatticeEntry {
                    half_length: l,
                    span,
                    start_index: grid.index_of(clipped.start),
                    end_index: grid.index_of(clipped.end),
                    log_prior: (a - 1.0) * l.ln() - b * l,
                });
            }
            let lse = log_sum_exp(row.iter().map(|e| e.log_prior));
            for e in &mut row {
                e.log_prior -= lse;
            }
            entries.push(row);
        }
        Ok(IntervalLattice {
            grid: grid.clone(),
            entries,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn center_count(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self, center: usize) -> &[LatticeEntry] {
        &self.entries[center]
    }

    pub fn entry(&self, center: usize, length: usize) -> &LatticeEntry {
        &self.entries[center][length]
    }

    /// Index of the admissible half-length of `center` closest to `half_length`.
    pub fn nearest_length(&self, center: usize, half_length: f64) -> usize {
        let row = &self.entries[center];
        let j = row.partition_point(|e| e.half_length < half_length);
        if j == 0 {
            0
        } else if j == row.len() {
            j - 1
        } else if half_length - row[j - 1].half_length <= row[j].half_length - half_length {
            j - 1
        } else {
            j
        }
    }

    /// Lattice coordinates of `(m, ℓ)`; `m` must be a grid point and `ℓ`
    /// an admissible half-length for it.
    pub fn locate(&self, center: f64, half_length: f64) -> Result<(usize, usize)> {
        let c = self.grid.index_of(center).ok_or_else(|| {
            BlissError::InvalidParameter(format!("center {center} is not a grid point"))
        })?;
        let li = self.nearest_length(c, half_length);
        if (self.entries[c][li].half_length - half_length).abs() > self.grid.tolerance() {
            return Err(BlissError::InvalidParameter(format!(
                "half-length {half_length} is not admissible for center {center}"
            )));
        }
        Ok((c, li))
    }
}

pub(crate) fn log_sum_exp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `n × K` matrix of curve means over the given intervals.
pub fn design_matrix(ds: &FunctionalDataset, spans: &[Span]) -> Result<DMatrix<f64>> {
    let n = ds.n();
    let mut x = DMatrix::zeros(n, spans.len());
    for (k, span) in spans.iter().enumerate() {
        for (i, curve) in ds.curves().iter().enumerate() {
            x[(i, k)] = partial_mean(ds.grid(), curve, span)?;
        }
    }
    Ok(x)
}

/// Largest eigenvalue of a symmetric positive-semidefinite matrix.
pub fn largest_eigenvalue(g: &DMatrix<f64>) -> f64 {
    let k = g.nrows();
    let flat: Vec<f64> = g.transpose().iter().copied().collect();
    linalg::largest_eigenvalue(k, &flat)
}

/// `G + v λ_max(G) I` for the Gram matrix `G = XᵀX`.
pub fn ridge_gram(x: &DMatrix<f64>, v: f64) -> Result<DMatrix<f64>> {
    if x.ncols() == 0 {
        return Err(BlissError::InvalidParameter("design has no columns".into()));
    }
    if !(v >= 0.0) {
        return Err(BlissError::InvalidParameter(format!("v must be nonnegative, got {v}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(BlissError::NonFinite("design matrix".into()));
    }
    Ok(ridge_from_gram(&(x.transpose() * x), v))
}

pub fn ridge_from_gram(g: &DMatrix<f64>, v: f64) -> DMatrix<f64> {
    let k = g.nrows();
    let lambda = largest_eigenvalue(g);
    if lambda <= 0.0 {
        return DMatrix::identity(k, k) * ZERO_DESIGN_RIDGE;
    }
    g + DMatrix::identity(k, k) * (v * lambda)
}

/// Replaces `g` (row-major `k × k`) by its ridge-regularized version.
pub(crate) fn ridge_in_place(k: usize, g: &mut [f64], v: f64) {
    let lambda = linalg::largest_eigenvalue(k, g);
    if lambda <= 0.0 {
        g.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..k {
            g[i * k + i] = ZERO_DESIGN_RIDGE;
        }
    } else {
        for i in 0..k {
            g[i * k + i] += v * lambda;
        }
    }
}

/// Defaults: `v0 = 100 ȳ²`, `v = 5`, `a = 1/(5K)`, `b = 1`, `γ = 1/2`,
/// `K0 = K`, `ε` = one grid step.
pub fn default_hyperparameters(ds: &FunctionalDataset, k: usize) -> Result<Hyperparameters> {
    if k < 1 {
        return Err(BlissError::InvalidParameter("K must be at least 1".into()));
    }
    let mean = ds.outcome_mean();
    let var = ds.outcome_variance();
    let v0 = if mean * mean > f64::EPSILON * var {
        100.0 * mean * mean
    } else if var > 0.0 {
        100.0 * var
    } else {
        100.0
    };
    Ok(Hyperparameters {
        k,
        a: 1.0 / (5.0 * k as f64),
        b: 1.0,
        v: 5.0,
        v0,
        gamma: 0.5,
        k0: k,
        epsilon: ds.grid().min_step(),
    })
}

/// `log N(β; 0, n σ² R^{-1})` for the row-major ridge matrix `R`.
pub(crate) fn log_coefficient_prior(k: usize, ridge: &[f64], beta: &[f64], n: usize, variance: f64) -> Option<f64> {
    let l = linalg::cholesky(k, ridge)?;
    let scale = n as f64 * variance;
    Some(
        -0.5 * k as f64 * (2.0 * PI * scale).ln() + 0.5 * linalg::chol_logdet(k, &l)
            - linalg::quad_form(k, ridge, beta) / (2.0 * scale),
    )
}

fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

/// Log prior density of `θ` (normalized Gaussians, discrete interval prior).
pub fn log_prior(theta: &ParamState, hp: &Hyperparameters, ds: &FunctionalDataset) -> Result<f64> {
    let grid = ds.grid();
    theta.validate(grid)?;
    let k = theta.k();
    let lattice = IntervalLattice::new(grid, hp.a, hp.b)?;
    let spans = theta.spans(grid)?;
    let x = design_matrix(ds, &spans)?;
    let ridge = to_row_major(&ridge_gram(&x, hp.v)?);
    let s2 = theta.variance;

    let mu_term = -0.5 * (2.0 * PI * hp.v0 * s2).ln() - theta.intercept.powi(2) / (2.0 * hp.v0 * s2);
    let beta_term = log_coefficient_prior(k, &ridge, &theta.coefficients, ds.n(), s2)
        .ok_or_else(|| BlissError::NotPositiveDefinite("ridge-regularized Gram matrix".into()))?;
    let sigma_term = -s2.ln();
    let center_term = -(k as f64) * (grid.len() as f64).ln();
    let mut length_term = 0.0;
    for (&m, &l) in theta.centers.iter().zip(&theta.half_lengths) {
        let (c, li) = lattice.locate(m, l)?;
        length_term += lattice.entry(c, li).log_prior;
    }
    let total = mu_term + beta_term + sigma_term + center_term + length_term;
    if !total.is_finite() {
        return Err(BlissError::NonFinite("log prior".into()));
    }
    Ok(total)
}

/// `‖y − μ1 − Xβ*‖²`.
pub fn residual_sum_of_squares(theta: &ParamState, ds: &FunctionalDataset) -> Result<f64> {
    let spans = theta.spans(ds.grid())?;
    let x = design_matrix(ds, &spans)?;
    Ok(ds
        .outcomes()
        .iter()
        .enumerate()
        .map(|(i, y)| {
            let fit: f64 = (0..theta.k()).map(|k| x[(i, k)] * theta.coefficients[k]).sum();
            (y - theta.intercept - fit).powi(2)
        })
        .sum())
}

/// Gaussian log-likelihood `−(n/2) log(2πσ²) − SSE / (2σ²)`.
pub fn log_likelihood(theta: &ParamState, ds: &FunctionalDataset) -> Result<f64> {
    theta.validate(ds.grid())?;
    let sse = residual_sum_of_squares(theta, ds)?;
    let n = ds.n() as f64;
    let ll = -0.5 * n * (2.0 * PI * theta.variance).ln() - sse / (2.0 * theta.variance);
    if !ll.is_finite() {
        return Err(BlissError::NonFinite("log likelihood".into()));
    }
    Ok(ll)
}

/// Monte-Carlo estimate of the prior probability that each grid cell lies in
/// the support, from `draws` prior draws of the intervals.
pub fn prior_alpha(hp: &Hyperparameters, grid: &TimeGrid, draws: usize, seed: u64) -> Result<AlphaCurve> {
    if draws < 1 {
        return Err(BlissError::InvalidParameter("need at least one prior draw".into()));
    }
    let lattice = IntervalLattice::new(grid, hp.a, hp.b)?;
    let cumulative: Vec<Vec<f64>> = (0..lattice.center_count())
        .map(|c| {
            let mut acc = 0.0;
            lattice
                .entries(c)
                .iter()
                .map(|e| {
                    acc += e.log_prior.exp();
                    acc
                })
                .collect()
        })
        .collect();
    let mut rng = rng_from_seed(seed);
    let p = grid.len();
    let supports = (0..draws).map(|_| {
        let spans: Vec<Span> = (0..hp.k)
            .map(|_| {
                let c = rng.random_range(0..p);
                let cum = &cumulative[c];
                let u = rng.random::<f64>() * cum[cum.len() - 1];
                let li = cum.partition_point(|&x| x <= u).min(cum.len() - 1);
                lattice.entry(c, li).span
            })
            .collect();
        IntervalSet::from_spans(spans)
    });
    Ok(alpha_from_supports(grid, supports))
}
