//! Synthetic datasets: Gaussian-process covariate curves with a Gaussian
//! kernel, three reference coefficient shapes and noise calibrated to a
//! signal-to-noise ratio.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::FunctionalDataset;
use crate::error::{BlissError, Result};
use crate::grid::{Span, TimeGrid};
use crate::intervals::IntervalSet;
use crate::rng::{derive_seed, rng_from_seed, stream, BlissRng};
use crate::step::{integrate_product, DisjointStepFunction, Piece, PiecewiseConstant};

const JITTER_DOUBLINGS: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Step,
    Smooth,
    Spiky,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Step, Shape::Smooth, Shape::Spiky];

    pub fn name(&self) -> &'static str {
        match self {
            Shape::Step => "step",
            Shape::Smooth => "smooth",
            Shape::Spiky => "spiky",
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = BlissError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "step" => Ok(Shape::Step),
            "smooth" => Ok(Shape::Smooth),
            "spiky" => Ok(Shape::Spiky),
            other => Err(BlissError::InvalidParameter(format!(
                "unknown shape '{other}' (expected step, smooth or spiky)"
            ))),
        }
    }
}

/// Unit of the time differences in the covariance kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelDistance {
    /// Differences counted in grid steps, so that `ζ = 1` gives neighboring
    /// points a correlation of `e^{-1}`.
    #[default]
    Steps,
    /// Differences in time units of `[0, 1]`.
    Time,
}

impl FromStr for KernelDistance {
    type Err = BlissError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "steps" => Ok(KernelDistance::Steps),
            "time" => Ok(KernelDistance::Time),
            other => Err(BlissError::InvalidParameter(format!(
                "unknown kernel distance '{other}' (expected steps or time)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub zeta: f64,
    pub r: f64,
    pub shape: Shape,
    pub mu: f64,
    pub marginal_sd: f64,
    pub seed: u64,
    #[serde(default)]
    pub kernel_distance: KernelDistance,
}

impl SimConfig {
    pub fn new(shape: Shape, r: f64, zeta: f64, n: usize, p: usize, seed: u64) -> Self {
        SimConfig {
            n,
            p,
            zeta,
            r,
            shape,
            mu: 1.0,
            marginal_sd: 1.0,
            seed,
            kernel_distance: KernelDistance::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BlissError::InvalidParameter(m));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.p < 2 {
            return bad(format!("p must be at least 2, got {}", self.p));
        }
        if !(self.zeta > 0.0 && self.zeta.is_finite()) {
            return bad(format!("zeta must be positive, got {}", self.zeta));
        }
        if !(self.r > 0.0) {
            return bad(format!("r must be positive, got {}", self.r));
        }
        if !(self.marginal_sd > 0.0 && self.marginal_sd.is_finite()) {
            return bad(format!("marginal sd must be positive, got {}", self.marginal_sd));
        }
        if !self.mu.is_finite() {
            return bad("mu must be finite".into());
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::regular(0.0, 1.0, self.p)
    }

    /// Positions at which the covariance kernel is evaluated.
    pub fn kernel_grid(&self) -> Result<TimeGrid> {
        match self.kernel_distance {
            KernelDistance::Steps => TimeGrid::regular(0.0, (self.p - 1) as f64, self.p),
            KernelDistance::Time => self.grid(),
        }
    }

    /// The covariance of the simulated curves.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        Ok(covariance_matrix(&self.kernel_grid()?, self.zeta, self.marginal_sd))
    }
}

pub const SNR_LEVELS: [f64; 3] = [5.0, 3.0, 1.0];
pub const ZETA_LEVELS: [f64; 3] = [1.0, 1.0 / 3.0, 1.0 / 5.0];

/// Configuration of the numbered datasets 1–27: shape-major, then `r` in
/// `5, 3, 1`, then `ζ` in `1, 1/3, 1/5`.
pub fn dataset_config(number: usize, n: usize, p: usize, seed: u64) -> Result<SimConfig> {
    if !(1..=27).contains(&number) {
        return Err(BlissError::InvalidParameter(format!(
            "dataset number must lie in 1..=27, got {number}"
        )));
    }
    let i = number - 1;
    Ok(SimConfig::new(Shape::ALL[i / 9], SNR_LEVELS[(i / 3) % 3], ZETA_LEVELS[i % 3], n, p, seed))
}

/// `Σ_ij = sd² exp(−ζ² (t_i − t_j)²)`.
pub fn covariance_matrix(grid: &TimeGrid, zeta: f64, marginal_sd: f64) -> DMatrix<f64> {
    let t = grid.points();
    let var = marginal_sd * marginal_sd;
    DMatrix::from_fn(t.len(), t.len(), |i, j| var * (-(zeta * zeta) * (t[i] - t[j]).powi(2)).exp())
}

/// Lower Cholesky factor, adding `1e−10 · trace/p` to the diagonal and
/// doubling it on failure.
pub fn jittered_cholesky(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(c) = sigma.clone().cholesky() {
        return Ok(c.l());
    }
    let p = sigma.nrows();
    let mut jitter = 1e-10 * sigma.trace() / p as f64;
    for _ in 0..=JITTER_DOUBLINGS {
        let shifted = sigma + DMatrix::identity(p, p) * jitter;
        if let Some(c) = shifted.cholesky() {
            return Ok(c.l());
        }
        jitter *= 2.0;
    }
    Err(BlissError::Factorization {
        attempts: JITTER_DOUBLINGS as usize + 1,
    })
}

/// `n` independent draws from `N_p(0, Σ)` with `Σ` from [`SimConfig::covariance`].
pub fn sample_curves(cfg: &SimConfig, rng: &mut BlissRng) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let l = jittered_cholesky(&cfg.covariance()?)?;
    let p = cfg.p;
    let mut z = vec![0.0; p];
    Ok((0..cfg.n)
        .map(|_| {
            z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            (0..p)
                .map(|i| (0..=i).map(|j| l[(i, j)] * z[j]).sum())
                .collect()
        })
        .collect())
}

/// The reference coefficient functions on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum TrueCoefficient {
    Step(DisjointStepFunction),
    Smooth,
    Spiky,
}

pub fn true_coefficient(shape: Shape) -> TrueCoefficient {
    match shape {
        Shape::Step => {
            let piece = |a: f64, b: f64, value: f64| Piece {
                span: Span::new(a, b),
                value,
            };
            let f = DisjointStepFunction::new(
                vec![piece(0.1, 0.3, 3.0), piece(0.45, 0.55, 4.0), piece(0.8, 0.95, -1.0)],
                0.1,
            )
            .expect("reference step function is well formed");
            TrueCoefficient::Step(f)
        }
        Shape::Smooth => TrueCoefficient::Smooth,
        Shape::Spiky => TrueCoefficient::Spiky,
    }
}

impl TrueCoefficient {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TrueCoefficient::Step(f) => f.eval(t),
            TrueCoefficient::Smooth => {
                let g = |c: f64| (-20.0 * (t - c).powi(2)).exp();
                5.0 * g(0.25) - 2.0 * g(0.5) + 2.0 * g(0.75)
            }
            TrueCoefficient::Spiky => {
                let bump = |c: f64| 1.0 / (2.0 + (c - 100.0 * t).exp() + (100.0 * t - c).exp());
                8.0 * bump(20.0) - 12.0 * bump(60.0)
            }
        }
    }

    pub fn eval_on(&self, grid: &TimeGrid) -> Vec<f64> {
        grid.points().iter().map(|&t| self.eval(t)).collect()
    }

    /// Support within `domain`. The smooth and spiky shapes never vanish.
    pub fn support(&self, domain: &Span) -> IntervalSet {
        match self {
            TrueCoefficient::Step(f) => IntervalSet::from_spans(
                f.pieces()
                    .into_iter()
                    .filter(|(_, h)| *h != 0.0)
                    .filter_map(|(s, _)| s.intersect(domain)),
            ),
            _ => IntervalSet::from_spans([*domain]),
        }
    }

    /// `∫ β0 x` over the grid: piece by piece for the step shape, trapezoid
    /// of the pointwise product otherwise.
    pub fn integrate(&self, grid: &TimeGrid, x: &[f64]) -> Result<f64> {
        match self {
            TrueCoefficient::Step(f) => integrate_product(f, grid, x),
            _ => {
                let prod: Vec<f64> = grid.points().iter().zip(x).map(|(&t, v)| self.eval(t) * v).collect();
                Ok(grid.integrate(&prod))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub shape: Shape,
    pub intercept: f64,
    pub noise_variance: f64,
    pub snr: f64,
    pub signal_variance: f64,
    pub support: IntervalSet,
    pub grid: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Simulates `y_i = μ + ∫ β0 x_i + ε_i` with `σ² = Var(signal) / r`.
pub fn generate(cfg: &SimConfig) -> Result<(FunctionalDataset, Truth)> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let mut curve_rng = rng_from_seed(derive_seed(cfg.seed, stream::CURVES));
    let mut noise_rng = rng_from_seed(derive_seed(cfg.seed, stream::NOISE));
    let curves = sample_curves(cfg, &mut curve_rng)?;
    let beta0 = true_coefficient(cfg.shape);
    let signal = curves
        .iter()
        .map(|x| beta0.integrate(&grid, x))
        .collect::<Result<Vec<f64>>>()?;
    let mean = signal.iter().sum::<f64>() / signal.len() as f64;
    let signal_variance = signal.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (signal.len() - 1) as f64;
    if !(signal_variance > 0.0) {
        return Err(BlissError::ZeroSignalVariance);
    }
    let noise_variance = signal_variance / cfg.r;
    let sd = noise_variance.sqrt();
    let outcomes = signal
        .iter()
        .map(|s| cfg.mu + s + sd * noise_rng.sample::<f64, _>(StandardNormal))
        .collect();
    let truth = Truth {
        shape: cfg.shape,
        intercept: cfg.mu,
        noise_variance,
        snr: cfg.r,
        signal_variance,
        support: beta0.support(&grid.domain()),
        grid: grid.points().to_vec(),
        beta: beta0.eval_on(&grid),
    };
    Ok((FunctionalDataset::new(grid, curves, outcomes)?, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_examples() {
        let g = TimeGrid::new(vec![0.0, 0.5, 1.0]).unwrap();
        let s = covariance_matrix(&g, 1.0, 1.0);
        assert_eq!(s[(1, 1)], 1.0);
        assert!((s[(0, 2)] - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(s[(0, 2)], s[(2, 0)]);
        let s = covariance_matrix(&g, 1.0, 2.0);
        assert_eq!(s[(0, 0)], 4.0);
        let far = TimeGrid::new(vec![0.0, 100.0]).unwrap();
        assert!(covariance_matrix(&far, 1.0, 1.0)[(0, 1)] < 1e-300);
    }

    #[test]
    fn coefficient_examples() {
        assert_eq!(true_coefficient(Shape::Step).eval(0.5), 4.0);
        let smooth = true_coefficient(Shape::Smooth).eval(0.25);
        let expected = 5.0 - 2.0 * (-1.25f64).exp() + 2.0 * (-5.0f64).exp();
        assert!((smooth - expected).abs() < 1e-12);
        assert!((smooth - 4.4405).abs() < 1e-3);
        assert!((true_coefficient(Shape::Spiky).eval(0.2) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn numbering() {
        let d1 = dataset_config(1, 100, 100, 0).unwrap();
        assert_eq!((d1.shape, d1.r, d1.zeta), (Shape::Step, 5.0, 1.0));
        let d3 = dataset_config(3, 100, 100, 0).unwrap();
        assert_eq!((d3.r, d3.zeta), (5.0, 0.2));
        let d4 = dataset_config(4, 100, 100, 0).unwrap();
        assert_eq!((d4.r, d4.zeta), (3.0, 1.0));
        let d19 = dataset_config(19, 100, 100, 0).unwrap();
        assert_eq!((d19.shape, d19.r, d19.zeta), (Shape::Spiky, 5.0, 1.0));
        let d25 = dataset_config(25, 100, 100, 0).unwrap();
        assert_eq!((d25.shape, d25.r, d25.zeta), (Shape::Spiky, 1.0, 1.0));
        assert!(dataset_config(0, 100, 100, 0).is_err());
        assert!(dataset_config(28, 100, 100, 0).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SimConfig::new(Shape::Step, 5.0, 1.0, 20, 30, 9);
        let (a, ta) = generate(&cfg).unwrap();
        let (b, tb) = generate(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        assert_eq!(ta.support.spans().len(), 3);
        assert!((ta.noise_variance * 5.0 - ta.signal_variance).abs() < 1e-12);
        let (c, _) = generate(&SimConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn kernel_distance_units() {
        let mut cfg = SimConfig::new(Shape::Step, 5.0, 1.0, 10, 11, 0);
        let s = cfg.covariance().unwrap();
        assert!((s[(0, 1)] - (-1.0f64).exp()).abs() < 1e-15);
        cfg.kernel_distance = KernelDistance::Time;
        let s = cfg.covariance().unwrap();
        assert!((s[(0, 1)] - (-0.01f64).exp()).abs() < 1e-15);
        assert_eq!("time".parse::<KernelDistance>().unwrap(), KernelDistance::Time);
    }

    #[test]
    fn shape_parsing() {
        assert_eq!("spiky".parse::<Shape>().unwrap(), Shape::Spiky);
        assert!("wavy".parse::<Shape>().is_err());
    }
}
