//! Posterior summaries of a chain and the error metrics used to score them.
//!
//! Supports are handled on the cell partition of the grid: cell `j` is
//! `[t_j, t_{j+1}]`, and the value of the support probability reported at
//! grid point `t_j` is the one of cell `j` (the probability that its
//! interior lies in the support). The value at the last grid point is the
//! probability of the point itself.

mod sann;

pub use sann::{
    sann_propose, stepwise_cost, stepwise_estimate, stepwise_estimate_from, temperature, SannConfig,
    SannOutcome, DEFAULT_SANN_ITERATIONS,
};

use serde::{Deserialize, Serialize};

use crate::error::{BlissError, Result};
use crate::gibbs::Chain;
use crate::grid::{Span, TimeGrid};
use crate::intervals::IntervalSet;
use crate::step::PiecewiseConstant;

/// `α(t | 𝒟)` on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaCurve {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl AlphaCurve {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(BlissError::DimensionMismatch(format!(
                "{} probabilities for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(BlissError::InvalidParameter(format!("probability {v} outside [0, 1]")));
        }
        Ok(AlphaCurve { grid, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Membership of each cell (and of the last grid point) in `set`.
pub fn cell_membership(grid: &TimeGrid, set: &IntervalSet) -> Vec<bool> {
    let p = grid.len();
    let mut out: Vec<bool> = (0..p - 1).map(|j| set.contains(grid.cell(j).midpoint())).collect();
    let last = grid.points()[p - 1];
    out.push(set.spans().iter().any(|s| s.contains(last)));
    out
}

/// Cell-wise frequency of membership over a collection of supports.
pub fn alpha_from_supports<I: IntoIterator<Item = IntervalSet>>(grid: &TimeGrid, supports: I) -> AlphaCurve {
    let mut counts = vec![0usize; grid.len()];
    let mut total = 0usize;
    for s in supports {
        total += 1;
        for (c, inside) in counts.iter_mut().zip(cell_membership(grid, &s)) {
            *c += inside as usize;
        }
    }
    let values = counts
        .into_iter()
        .map(|c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect();
    AlphaCurve {
        grid: grid.clone(),
        values,
    }
}

fn check_chain(chain: &Chain) -> Result<()> {
    if chain.states.is_empty() {
        return Err(BlissError::InvalidParameter("chain has no retained states".into()));
    }
    Ok(())
}

/// Posterior probability that each cell lies in the support of `β_θ`.
pub fn posterior_alpha(chain: &Chain, grid: &TimeGrid) -> Result<AlphaCurve> {
    check_chain(chain)?;
    let supports = chain
        .states
        .iter()
        .map(|s| s.support(grid))
        .collect::<Result<Vec<_>>>()?;
    Ok(alpha_from_supports(grid, supports))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportEstimate {
    pub gamma: f64,
    pub intervals: IntervalSet,
}

/// The level set `{α ≥ γ}`, as a union of grid cells.
pub fn support_estimate(alpha: &AlphaCurve, gamma: f64) -> Result<SupportEstimate> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(BlissError::InvalidParameter(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    let grid = alpha.grid();
    let cells = (0..grid.cell_count())
        .filter(|&j| alpha.values()[j] >= gamma)
        .map(|j| grid.cell(j));
    Ok(SupportEstimate {
        gamma,
        intervals: IntervalSet::from_spans(cells),
    })
}

/// `L_γ(S, S′) = γ|S ∖ S′| + (1 − γ)|S′ ∖ S|`, with `S` the estimate and
/// `S′` the reference support.
pub fn support_loss(estimate: &IntervalSet, reference: &IntervalSet, gamma: f64) -> f64 {
    gamma * estimate.difference_measure(reference) + (1.0 - gamma) * reference.difference_measure(estimate)
}

/// `Σ_s L_γ(S, S_s)` over the posterior supports.
pub fn posterior_loss(estimate: &IntervalSet, posterior_supports: &[IntervalSet], gamma: f64) -> f64 {
    posterior_supports
        .iter()
        .map(|s| support_loss(estimate, s, gamma))
        .sum()
}

/// Whether the level set of `alpha` attains the smallest posterior loss
/// among `candidates`. `alpha` must come from `posterior_supports`.
pub fn bayes_optimality_check(
    alpha: &AlphaCurve,
    gamma: f64,
    posterior_supports: &[IntervalSet],
    candidates: &[IntervalSet],
) -> Result<bool> {
    let level = support_estimate(alpha, gamma)?.intervals;
    let best = candidates
        .iter()
        .map(|c| posterior_loss(c, posterior_supports, gamma))
        .fold(f64::INFINITY, f64::min);
    Ok(posterior_loss(&level, posterior_supports, gamma) <= best)
}

/// Every union of grid cells; `2^(p−1)` sets.
pub fn all_cell_unions(grid: &TimeGrid) -> Result<Vec<IntervalSet>> {
    let cells = grid.cell_count();
    if cells > 20 {
        return Err(BlissError::InvalidParameter(format!(
            "{cells} cells is too many to enumerate"
        )));
    }
    Ok((0u32..1 << cells)
        .map(|mask| IntervalSet::from_spans((0..cells).filter(|j| mask >> j & 1 == 1).map(|j| grid.cell(j))))
        .collect())
}

/// `β_θ(t_j)` for every retained state (rows) and grid point (columns).
pub fn coefficient_draws(chain: &Chain, grid: &TimeGrid) -> Result<Vec<Vec<f64>>> {
    chain
        .states
        .iter()
        .map(|s| Ok(s.step_function(grid)?.eval_on(grid)))
        .collect()
}

/// Pointwise posterior mean of the coefficient function.
pub fn beta_l2(chain: &Chain, grid: &TimeGrid) -> Result<Vec<f64>> {
    check_chain(chain)?;
    Ok(mean_columns(&coefficient_draws(chain, grid)?, grid.len()))
}

fn mean_columns(rows: &[Vec<f64>], p: usize) -> Vec<f64> {
    let mut mean = vec![0.0; p];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows.len() as f64);
    mean
}

pub const DEFAULT_HEATMAP_BINS: usize = 512;

/// Empirical joint distribution of `(t, β_θ(t))` over the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatMap {
    pub times: Vec<f64>,
    /// `bins + 1` increasing edges.
    pub value_edges: Vec<f64>,
    /// `mass[j][b]`: share of draws at `t_j` falling in value bin `b`.
    pub mass: Vec<Vec<f64>>,
    /// Share of draws exactly zero at `t_j`.
    pub zero_atom: Vec<f64>,
}

impl HeatMap {
    pub fn bin_midpoints(&self) -> Vec<f64> {
        self.value_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn bin_width(&self) -> f64 {
        self.value_edges[1] - self.value_edges[0]
    }
}

/// Histogram per grid point. The default range is `[−M, M]` with `M` the
/// largest absolute sampled value; values outside a given range fall in
/// the edge bins.
pub fn heatmap(chain: &Chain, grid: &TimeGrid, bins: usize, range: Option<(f64, f64)>) -> Result<HeatMap> {
    check_chain(chain)?;
    heatmap_from_draws(&coefficient_draws(chain, grid)?, grid, bins, range)
}

pub fn heatmap_from_draws(draws: &[Vec<f64>], grid: &TimeGrid, bins: usize, range: Option<(f64, f64)>) -> Result<HeatMap> {
    if bins < 1 {
        return Err(BlissError::InvalidParameter("need at least one bin".into()));
    }
    if draws.is_empty() {
        return Err(BlissError::InvalidParameter("no draws".into()));
    }
    let (lo, hi) = match range {
        Some((lo, hi)) if lo < hi && lo.is_finite() && hi.is_finite() => (lo, hi),
        Some((lo, hi)) => {
            return Err(BlissError::InvalidParameter(format!("invalid heat-map range [{lo}, {hi}]")))
        }
        None => {
            let m = draws.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            let m = if m > 0.0 { m } else { 1.0 };
            (-m, m)
        }
    };
    let width = (hi - lo) / bins as f64;
    let value_edges: Vec<f64> = (0..=bins).map(|b| lo + b as f64 * width).collect();
    let p = grid.len();
    let share = 1.0 / draws.len() as f64;
    let mut mass = vec![vec![0.0; bins]; p];
    let mut zero_atom = vec![0.0; p];
    for row in draws {
        for (j, &v) in row.iter().enumerate() {
            if v == 0.0 {
                zero_atom[j] += share;
            } else {
                let b = ((v - lo) / width).floor().clamp(0.0, (bins - 1) as f64) as usize;
                mass[j][b] += share;
            }
        }
    }
    Ok(HeatMap {
        times: grid.points().to_vec(),
        value_edges,
        mass,
        zero_atom,
    })
}

/// `|Ŝ Δ S0|`.
pub fn support_error(estimate: &IntervalSet, truth: &IntervalSet) -> f64 {
    estimate.symmetric_difference_measure(truth)
}

/// Trapezoidal `∫ (β̂ − β0)²` over the grid.
pub fn l2_error(grid: &TimeGrid, estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != grid.len() || truth.len() != grid.len() {
        return Err(BlissError::DimensionMismatch(format!(
            "curves of length {} and {} for a grid of {} points",
            estimate.len(),
            truth.len(),
            grid.len()
        )));
    }
    let sq: Vec<f64> = estimate.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).collect();
    Ok(grid.integrate(&sq))
}

/// Support of a piecewise-constant estimate: the pieces with nonzero height.
pub fn piecewise_support<F: PiecewiseConstant + ?Sized>(f: &F) -> IntervalSet {
    IntervalSet::from_spans(f.pieces().into_iter().filter(|(_, h)| *h != 0.0).map(|(s, _)| s))
}

/// The span covered by the whole domain, as a support.
pub fn whole_domain(grid: &TimeGrid) -> IntervalSet {
    let d = grid.domain();
    IntervalSet::from_spans([Span::new(d.start, d.end)])
}
