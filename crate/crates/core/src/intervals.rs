//! Finite unions of closed intervals with exact Lebesgue-measure arithmetic.

use serde::{Deserialize, Serialize};

use crate::grid::Span;

/// A finite union of intervals, stored as sorted, pairwise disjoint spans.
///
/// Spans that touch are merged; zero-length spans are dropped since they
/// carry no measure.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntervalSet {
    spans: Vec<Span>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        IntervalSet { spans: Vec::new() }
    }

    pub fn from_spans<I: IntoIterator<Item = Span>>(spans: I) -> Self {
        let mut v: Vec<Span> = spans.into_iter().filter(|s| s.len() > 0.0).collect();
        v.sort_by(|a, b| a.start.total_cmp(&b.start));
        let mut merged: Vec<Span> = Vec::with_capacity(v.len());
        for s in v {
            match merged.last_mut() {
                Some(last) if s.start <= last.end => last.end = last.end.max(s.end),
                _ => merged.push(s),
            }
        }
        IntervalSet { spans: merged }
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.spans.iter().map(Span::len).sum()
    }

    pub fn contains(&self, t: f64) -> bool {
        let j = self.spans.partition_point(|s| s.end < t);
        self.spans.get(j).is_some_and(|s| s.contains(t))
    }

    pub fn union(&self, other: &IntervalSet) -> IntervalSet {
        IntervalSet::from_spans(self.spans.iter().chain(&other.spans).copied())
    }

    pub fn intersection(&self, other: &IntervalSet) -> IntervalSet {
        let (a, b) = (&self.spans, &other.spans);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() && j < b.len() {
            if let Some(s) = a[i].intersect(&b[j]) {
                out.push(s);
            }
            if a[i].end < b[j].end {
                i += 1;
            } else {
                j += 1;
            }
        }
        IntervalSet::from_spans(out)
    }

    /// `|self \ other|`.
    pub fn difference_measure(&self, other: &IntervalSet) -> f64 {
        (self.measure() - self.intersection(other).measure()).max(0.0)
    }

    /// `|self Δ other|`.
    pub fn symmetric_difference_measure(&self, other: &IntervalSet) -> f64 {
        self.difference_measure(other) + other.difference_measure(self)
    }
}
