//! Observation grids and the quadrature shared by every module.
//!
//! Curves are known only at grid points; between points they are
//! interpolated linearly, so every integral here is the exact integral of
//! the piecewise-linear interpolant (the trapezoidal rule, extended to
//! interval endpoints that fall between grid points).

use serde::{Deserialize, Serialize};

use crate::error::{BlissError, Result};

/// A closed interval `[start, end]` of the time axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub start: f64,
    pub end: f64,
}

impl Span {
    pub fn new(start: f64, end: f64) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> f64 {
        (self.end - self.start).max(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t <= self.end
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.start + self.end)
    }

    pub fn intersect(&self, other: &Span) -> Option<Span> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        (start <= end).then_some(Span { start, end })
    }
}

/// Strictly increasing observation times inside a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    points: Vec<f64>,
    domain: Span,
}

impl TimeGrid {
    /// Builds a grid whose domain is `[t_1, t_p]`.
    pub fn new(points: Vec<f64>) -> Result<Self> {
        let domain = match (points.first(), points.last()) {
            (Some(&a), Some(&b)) => Span::new(a, b),
            _ => return Err(BlissError::InvalidGrid("grid is empty".into())),
        };
        Self::with_domain(points, domain)
    }

    pub fn with_domain(points: Vec<f64>, domain: Span) -> Result<Self> {
        if points.len() < 2 {
            return Err(BlissError::InvalidGrid(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if let Some(bad) = points.iter().position(|t| !t.is_finite()) {
            return Err(BlissError::InvalidGrid(format!("point {} is not finite", bad + 1)));
        }
        if let Some(j) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(BlissError::InvalidGrid(format!(
                "points not strictly increasing at position {}",
                j + 2
            )));
        }
        if domain.start > points[0] || domain.end < points[points.len() - 1] {
            return Err(BlissError::InvalidGrid(format!(
                "domain [{}, {}] does not contain the grid",
                domain.start, domain.end
            )));
        }
        Ok(TimeGrid { points, domain })
    }

    /// `p` equally spaced points covering `[start, end]`.
    pub fn regular(start: f64, end: f64, p: usize) -> Result<Self> {
        if p < 2 || !(end > start) {
            return Err(BlissError::InvalidGrid(format!(
                "cannot build a regular grid of {p} points on [{start}, {end}]"
            )));
        }
        let h = (end - start) / (p - 1) as f64;
        let mut points: Vec<f64> = (0..p).map(|j| start + h * j as f64).collect();
        points[p - 1] = end;
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn domain(&self) -> Span {
        self.domain
    }

    /// Span of the observed points, `[t_1, t_p]`.
    pub fn span(&self) -> Span {
        Span::new(self.points[0], self.points[self.points.len() - 1])
    }

    /// Smallest spacing between consecutive points.
    pub fn min_step(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Tolerance used when comparing times to grid points.
    pub fn tolerance(&self) -> f64 {
        1e-9 * self.span().len()
    }

    /// Index of the grid point equal to `t` up to [`Self::tolerance`].
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let j = self.nearest_index(t);
        ((self.points[j] - t).abs() <= self.tolerance()).then_some(j)
    }

    pub fn nearest_index(&self, t: f64) -> usize {
        let j = self.points.partition_point(|&x| x < t);
        if j == 0 {
            0
        } else if j == self.points.len() {
            j - 1
        } else if t - self.points[j - 1] <= self.points[j] - t {
            j - 1
        } else {
            j
        }
    }

    /// Moves `t` onto a grid point when it is within tolerance of one.
    pub fn snap(&self, t: f64) -> f64 {
        self.index_of(t).map_or(t, |j| self.points[j])
    }

    /// Cell `j` is `[t_j, t_{j+1}]`; there are `p - 1` of them.
    pub fn cell(&self, j: usize) -> Span {
        Span::new(self.points[j], self.points[j + 1])
    }

    pub fn cell_count(&self) -> usize {
        self.points.len() - 1
    }

    /// Trapezoidal quadrature weights: `∫ f ≈ Σ w_j f(t_j)`.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let p = self.points.len();
        let mut w = vec![0.0; p];
        for j in 0..p - 1 {
            let h = self.points[j + 1] - self.points[j];
            w[j] += 0.5 * h;
            w[j + 1] += 0.5 * h;
        }
        w
    }

    /// Trapezoidal integral of grid values over `[t_1, t_p]`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.points.len());
        self.points
            .windows(2)
            .zip(values.windows(2))
            .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
            .sum()
    }

    /// Linear interpolation of grid values at `t` within the grid span.
    pub fn interpolate(&self, values: &[f64], t: f64) -> f64 {
        let j = self.segment_of(t);
        let (t0, t1) = (self.points[j], self.points[j + 1]);
        let w = (t - t0) / (t1 - t0);
        values[j] + w * (values[j + 1] - values[j])
    }

    /// Index `j` of the segment `[t_j, t_{j+1}]` holding `t` (clamped).
    fn segment_of(&self, t: f64) -> usize {
        let p = self.points.len();
        self.points.partition_point(|&x| x <= t).saturating_sub(1).min(p - 2)
    }
}

fn check_curve(grid: &TimeGrid, x: &[f64]) -> Result<()> {
    if x.len() != grid.len() {
        return Err(BlissError::DimensionMismatch(format!(
            "curve has {} values for a grid of {} points",
            x.len(),
            grid.len()
        )));
    }
    Ok(())
}

/// Clips `span` to the grid span; fails when nothing of positive length is left.
fn clip_to_grid(grid: &TimeGrid, span: &Span) -> Result<Span> {
    match span.intersect(&grid.span()) {
        Some(s) if s.len() > 0.0 => Ok(s),
        _ => Err(BlissError::DegenerateInterval {
            start: span.start,
            end: span.end,
        }),
    }
}

/// Integral of the interpolated curve over `span` (clipped to the grid).
pub fn integrate_over(grid: &TimeGrid, x: &[f64], span: &Span) -> Result<f64> {
    check_curve(grid, x)?;
    let s = clip_to_grid(grid, span)?;
    let t = grid.points();
    let mut total = 0.0;
    for j in 0..t.len() - 1 {
        let (a, b) = (t[j].max(s.start), t[j + 1].min(s.end));
        if b <= a {
            continue;
        }
        let xa = grid.interpolate(x, a);
        let xb = grid.interpolate(x, b);
        total += 0.5 * (b - a) * (xa + xb);
    }
    Ok(total)
}

/// Mean value `(1/|I|) ∫_I x(t) dt` of a curve over an interval.
pub fn partial_mean(grid: &TimeGrid, x: &[f64], span: &Span) -> Result<f64> {
    let s = clip_to_grid(grid, span)?;
    Ok(integrate_over(grid, x, &s)? / s.len())
}

/// Running integrals `F(t) = ∫_{t_1}^t x` of one curve, so that interval
/// means cost a lookup instead of a pass over the grid.
#[derive(Debug, Clone)]
pub struct CumulativeIntegral {
    cumulative: Vec<f64>,
}

impl CumulativeIntegral {
    pub fn new(grid: &TimeGrid, x: &[f64]) -> Result<Self> {
        check_curve(grid, x)?;
        let t = grid.points();
        let mut cumulative = Vec::with_capacity(t.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for j in 0..t.len() - 1 {
            acc += 0.5 * (t[j + 1] - t[j]) * (x[j] + x[j + 1]);
            cumulative.push(acc);
        }
        Ok(CumulativeIntegral { cumulative })
    }

    /// `F(t)` for `t` within the grid span.
    pub fn at(&self, grid: &TimeGrid, x: &[f64], t: f64) -> f64 {
        let pts = grid.points();
        if let Some(j) = grid.index_of(t) {
            return self.cumulative[j];
        }
        let j = grid.segment_of(t);
        let xt = grid.interpolate(x, t);
        self.cumulative[j] + 0.5 * (t - pts[j]) * (x[j] + xt)
    }

    pub fn mean_over(&self, grid: &TimeGrid, x: &[f64], span: &Span) -> Result<f64> {
        let s = clip_to_grid(grid, span)?;
        Ok((self.at(grid, x, s.end) - self.at(grid, x, s.start)) / s.len())
    }
}
