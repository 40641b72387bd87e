use serde::{Deserialize, Serialize};

use crate::error::{BlissError, Result};
use crate::grid::TimeGrid;

/// `n` curves sampled on a common grid, with one scalar outcome per curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalDataset {
    grid: TimeGrid,
    curves: Vec<Vec<f64>>,
    outcomes: Vec<f64>,
}

impl FunctionalDataset {
    pub fn new(grid: TimeGrid, curves: Vec<Vec<f64>>, outcomes: Vec<f64>) -> Result<Self> {
        if curves.len() != outcomes.len() {
            return Err(BlissError::DimensionMismatch(format!(
                "{} curves but {} outcomes",
                curves.len(),
                outcomes.len()
            )));
        }
        if curves.len() < 2 {
            return Err(BlissError::DimensionMismatch(format!(
                "need at least 2 observations, got {}",
                curves.len()
            )));
        }
        if let Some((i, c)) = curves.iter().enumerate().find(|(_, c)| c.len() != grid.len()) {
            return Err(BlissError::DimensionMismatch(format!(
                "curve {} has {} values for a grid of {} points",
                i + 1,
                c.len(),
                grid.len()
            )));
        }
        let finite = curves.iter().flatten().chain(&outcomes).all(|v| v.is_finite());
        if !finite {
            return Err(BlissError::NonFinite("dataset contains NaN or infinite values".into()));
        }
        Ok(FunctionalDataset { grid, curves, outcomes })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn curves(&self) -> &[Vec<f64>] {
        &self.curves
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn n(&self) -> usize {
        self.outcomes.len()
    }

    pub fn p(&self) -> usize {
        self.grid.len()
    }

    pub fn outcome_mean(&self) -> f64 {
        self.outcomes.iter().sum::<f64>() / self.n() as f64
    }

    /// Unbiased sample variance of the outcomes.
    pub fn outcome_variance(&self) -> f64 {
        let m = self.outcome_mean();
        self.outcomes.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (self.n() - 1) as f64
    }

    /// FNV-1a hash over the bit patterns of grid, curves and outcomes.
    pub fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |v: f64| {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        let d = self.grid.domain();
        feed(d.start);
        feed(d.end);
        self.grid.points().iter().copied().for_each(&mut feed);
        self.curves.iter().flatten().copied().for_each(&mut feed);
        self.outcomes.iter().copied().for_each(&mut feed);
        format!("{h:016x}")
    }
}
