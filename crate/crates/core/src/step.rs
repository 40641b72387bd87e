//! Step-function coefficients.
//!
//! Two encodings coexist. [`StepFunction`] is the model's normalized form,
//! `β(t) = Σ β*_k 1{t ∈ I_k} / |I_k|`, with possibly overlapping intervals.
//! [`DisjointStepFunction`] stores raw heights on disjoint pieces and is the
//! shape of the stepwise estimate and of the simulated step truth.

use serde::{Deserialize, Serialize};

use crate::error::{BlissError, Result};
use crate::grid::{integrate_over, Span, TimeGrid};
use crate::intervals::IntervalSet;

/// An interval parametrized by its center and half-length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub center: f64,
    pub half_length: f64,
}

impl Interval {
    pub fn new(center: f64, half_length: f64) -> Self {
        Interval { center, half_length }
    }

    pub fn realize(&self, domain: &Span) -> Result<Span> {
        realize_interval(self.center, self.half_length, domain)
    }
}

/// `[m - ℓ, m + ℓ] ∩ domain`.
pub fn realize_interval(center: f64, half_length: f64, domain: &Span) -> Result<Span> {
    if !domain.contains(center) {
        return Err(BlissError::OutsideDomain {
            value: center,
            start: domain.start,
            end: domain.end,
        });
    }
    if !(half_length >= 0.0) {
        return Err(BlissError::InvalidParameter(format!(
            "half-length must be nonnegative, got {half_length}"
        )));
    }
    Ok(Span::new(
        domain.start.max(center - half_length),
        domain.end.min(center + half_length),
    ))
}

/// Any function that is a finite sum of interval indicators.
pub trait PiecewiseConstant {
    /// `(span, height)` pairs; the function is `Σ height · 1{t ∈ span}`.
    fn pieces(&self) -> Vec<(Span, f64)>;

    fn eval(&self, t: f64) -> f64 {
        self.pieces()
            .iter()
            .filter(|(s, _)| s.contains(t))
            .map(|(_, h)| h)
            .sum()
    }

    fn eval_on(&self, grid: &TimeGrid) -> Vec<f64> {
        let pieces = self.pieces();
        grid.points()
            .iter()
            .map(|&t| pieces.iter().filter(|(s, _)| s.contains(t)).map(|(_, h)| h).sum())
            .collect()
    }

    /// Union of the pieces carrying a nonzero height.
    fn support(&self) -> IntervalSet {
        IntervalSet::from_spans(
            self.pieces()
                .into_iter()
                .filter(|(_, h)| *h != 0.0)
                .map(|(s, _)| s),
        )
    }
}

/// Normalized step function `Σ β*_k 1{t ∈ I_k} / |I_k|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    spans: Vec<Span>,
    coefficients: Vec<f64>,
}

impl StepFunction {
    /// Builds from realized intervals. Zero-length intervals are allowed here
    /// and rejected at evaluation time.
    pub fn new(spans: Vec<Span>, coefficients: Vec<f64>) -> Result<Self> {
        if spans.is_empty() {
            return Err(BlissError::InvalidParameter("K must be at least 1".into()));
        }
        if spans.len() != coefficients.len() {
            return Err(BlissError::DimensionMismatch(format!(
                "{} intervals but {} coefficients",
                spans.len(),
                coefficients.len()
            )));
        }
        Ok(StepFunction { spans, coefficients })
    }

    pub fn from_intervals(intervals: &[Interval], coefficients: Vec<f64>, domain: &Span) -> Result<Self> {
        let spans = intervals
            .iter()
            .map(|i| i.realize(domain))
            .collect::<Result<Vec<_>>>()?;
        Self::new(spans, coefficients)
    }

    pub fn k(&self) -> usize {
        self.spans.len()
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Value at `t`; fails if an interval containing `t` has zero length.
    pub fn try_eval(&self, t: f64) -> Result<f64> {
        let mut v = 0.0;
        for (s, &b) in self.spans.iter().zip(&self.coefficients) {
            if s.contains(t) {
                if s.len() == 0.0 {
                    return Err(BlissError::DegenerateInterval {
                        start: s.start,
                        end: s.end,
                    });
                }
                v += b / s.len();
            }
        }
        Ok(v)
    }
}

impl PiecewiseConstant for StepFunction {
    /// Heights are `β*_k / |I_k|`; a degenerate interval yields an infinite
    /// height, so evaluation paths that can meet one use [`StepFunction::try_eval`].
    fn pieces(&self) -> Vec<(Span, f64)> {
        self.spans
            .iter()
            .zip(&self.coefficients)
            .map(|(s, &b)| (*s, b / s.len()))
            .collect()
    }
}

/// `eval_step_function`: value of the normalized form at `t`.
pub fn eval_step_function(f: &StepFunction, t: f64) -> Result<f64> {
    f.try_eval(t)
}

/// Union of the realized intervals with nonzero coefficient, merged.
pub fn support_of(f: &StepFunction) -> IntervalSet {
    IntervalSet::from_spans(
        f.spans
            .iter()
            .zip(&f.coefficients)
            .filter(|(_, &b)| b != 0.0)
            .map(|(s, _)| *s),
    )
}

/// `∫ β(t) x(t) dt` over the grid span, piece by piece.
pub fn integrate_product<F: PiecewiseConstant + ?Sized>(beta: &F, grid: &TimeGrid, x: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (span, height) in beta.pieces() {
        if height == 0.0 {
            continue;
        }
        if !height.is_finite() {
            return Err(BlissError::DegenerateInterval {
                start: span.start,
                end: span.end,
            });
        }
        // pieces outside the observed span contribute nothing
        if span.intersect(&grid.span()).is_none_or(|s| s.len() == 0.0) {
            continue;
        }
        total += height * integrate_over(grid, x, &span)?;
    }
    Ok(total)
}

/// A piece of a [`DisjointStepFunction`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub span: Span,
    pub value: f64,
}

/// Step function with pairwise disjoint pieces, each at least `min_length` long.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisjointStepFunction {
    pieces: Vec<Piece>,
    min_length: f64,
}

impl DisjointStepFunction {
    /// Validates disjointness and the minimum length. Pieces are sorted.
    pub fn new(mut pieces: Vec<Piece>, min_length: f64) -> Result<Self> {
        if !(min_length > 0.0) {
            return Err(BlissError::InvalidParameter(format!(
                "minimum piece length must be positive, got {min_length}"
            )));
        }
        pieces.sort_by(|a, b| a.span.start.total_cmp(&b.span.start));
        let slack = 1e-9 * min_length;
        for p in &pieces {
            if p.span.len() < min_length - slack {
                return Err(BlissError::InvalidParameter(format!(
                    "piece [{}, {}] shorter than {min_length}",
                    p.span.start, p.span.end
                )));
            }
            if !p.value.is_finite() {
                return Err(BlissError::NonFinite("piece value".into()));
            }
        }
        if let Some(w) = pieces.windows(2).find(|w| w[1].span.start <= w[0].span.end) {
            return Err(BlissError::InvalidParameter(format!(
                "pieces [{}, {}] and [{}, {}] overlap",
                w[0].span.start, w[0].span.end, w[1].span.start, w[1].span.end
            )));
        }
        Ok(DisjointStepFunction { pieces, min_length })
    }

    /// The zero function.
    pub fn zero(min_length: f64) -> Result<Self> {
        Self::new(Vec::new(), min_length)
    }

    pub fn piece_list(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn min_length(&self) -> f64 {
        self.min_length
    }
}

impl PiecewiseConstant for DisjointStepFunction {
    fn pieces(&self) -> Vec<(Span, f64)> {
        self.pieces.iter().map(|p| (p.span, p.value)).collect()
    }
}
