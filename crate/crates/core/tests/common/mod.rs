#![allow(dead_code)]

use bliss_core::rng::rng_from_seed;
use bliss_core::{FunctionalDataset, TimeGrid};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn interp(t: &[f64], x: &[f64], u: f64) -> f64 {
    let i = match t.iter().position(|&v| v >= u) {
        Some(0) => return x[0],
        Some(i) => i,
        None => return x[x.len() - 1],
    };
    let w = (u - t[i - 1]) / (t[i] - t[i - 1]);
    x[i - 1] + w * (x[i] - x[i - 1])
}

/// Mean of the linear interpolant of `x` over `[s, e]`.
pub fn mean_over(t: &[f64], x: &[f64], s: f64, e: f64) -> f64 {
    let mut pts = vec![s];
    pts.extend(t.iter().copied().filter(|&v| v > s && v < e));
    pts.push(e);
    let area: f64 = pts
        .windows(2)
        .map(|w| 0.5 * (w[1] - w[0]) * (interp(t, x, w[0]) + interp(t, x, w[1])))
        .sum();
    area / (e - s)
}

pub fn realized(t: &[f64], m: f64, l: f64) -> (f64, f64) {
    let snap = |u: f64| t.iter().copied().find(|v| (v - u).abs() < 1e-9).unwrap_or(u);
    (snap((m - l).max(t[0])), snap((m + l).min(t[t.len() - 1])))
}

pub fn design(t: &[f64], curves: &[Vec<f64>], spans: &[(f64, f64)]) -> DMatrix<f64> {
    DMatrix::from_fn(curves.len(), spans.len(), |i, k| mean_over(t, &curves[i], spans[k].0, spans[k].1))
}

pub fn ridge(x: &DMatrix<f64>, v: f64) -> DMatrix<f64> {
    let g = x.transpose() * x;
    let lmax = SymmetricEigen::new(g.clone()).eigenvalues.max();
    let k = g.nrows();
    g + DMatrix::identity(k, k) * (v * lmax)
}

/// Gaussian curves with `y` driven by the middle of the grid.
pub fn random_dataset(t: Vec<f64>, n: usize, seed: u64) -> FunctionalDataset {
    let mut rng = rng_from_seed(seed);
    let p = t.len();
    let curves: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let y = (0..n)
        .map(|i| 1.0 + 2.0 * curves[i][p / 2] + 0.5 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    FunctionalDataset::new(TimeGrid::new(t).unwrap(), curves, y).unwrap()
}

pub fn regular(p: usize) -> Vec<f64> {
    (0..p).map(|j| j as f64 / (p - 1) as f64).collect()
}
