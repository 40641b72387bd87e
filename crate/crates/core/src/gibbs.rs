//! Gibbs sampler over `θ = (m, ℓ, β*, μ, σ²)`.
//!
//! One sweep draws `(μ, β*)` jointly, then `σ²`, then each center `m_k`,
//! then each half-length `ℓ_k`. Centers and half-lengths take finitely many
//! values (see [`IntervalLattice`]), so their conditionals are sampled by
//! enumeration in log space.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::FunctionalDataset;
use crate::error::{BlissError, Result};
use crate::linalg;
use crate::model::{ridge_in_place, Hyperparameters, IntervalLattice, LatticeEntry, ParamState};
use crate::rng::{derive_seed, rng_from_seed, stream, BlissRng, RNG_ALGORITHM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Keep centers and half-lengths at their initial values.
    #[serde(default)]
    pub freeze_intervals: bool,
}

impl GibbsConfig {
    pub fn new(iterations: usize, burn_in: usize, thin: usize, seed: u64) -> Result<Self> {
        let cfg = GibbsConfig {
            iterations,
            burn_in,
            thin,
            seed,
            freeze_intervals: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(BlissError::InvalidParameter("thin must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(BlissError::InvalidParameter(format!(
                "burn-in {} must be below the iteration count {}",
                self.burn_in, self.iterations
            )));
        }
        if self.retained() == 0 {
            return Err(BlissError::InvalidParameter(
                "configuration retains no draws".into(),
            ));
        }
        Ok(())
    }

    /// `⌊(iterations − burn_in) / thin⌋`.
    pub fn retained(&self) -> usize {
        self.iterations.saturating_sub(self.burn_in) / self.thin.max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub states: Vec<ParamState>,
    pub config: GibbsConfig,
    pub hyperparameters: Hyperparameters,
    pub fingerprint: String,
    pub rng_algorithm: String,
    /// Discrete updates skipped because every weight underflowed.
    #[serde(default)]
    pub underflow_events: u64,
}

/// Mutable sampler state: lattice coordinates of each interval, the current
/// design and scratch space for candidate evaluation.
struct Sampler<'a> {
    ds: &'a FunctionalDataset,
    hp: &'a Hyperparameters,
    lattice: IntervalLattice,
    n: usize,
    k: usize,
    /// `cum[j * n + i] = ∫_{t_1}^{t_j} x_i`.
    cum: Vec<f64>,
    slots: Vec<(usize, usize)>,
    /// Column-major `n × K` design.
    x: Vec<f64>,
    beta: Vec<f64>,
    mu: f64,
    sigma2: f64,
    col: Vec<f64>,
    resid: Vec<f64>,
    g: Vec<f64>,
    chol: Vec<f64>,
    underflow_events: u64,
}

impl<'a> Sampler<'a> {
    fn new(ds: &'a FunctionalDataset, hp: &'a Hyperparameters) -> Result<Self> {
        hp.validate(&ds.grid().domain())?;
        if ds.p() < 2 {
            return Err(BlissError::InvalidGrid("need at least two grid points".into()));
        }
        let lattice = IntervalLattice::new(ds.grid(), hp.a, hp.b)?;
        let (n, p, k) = (ds.n(), ds.p(), hp.k);
        let t = ds.grid().points();
        let mut cum = vec![0.0; p * n];
        for (i, x) in ds.curves().iter().enumerate() {
            for j in 1..p {
                cum[j * n + i] = cum[(j - 1) * n + i] + 0.5 * (t[j] - t[j - 1]) * (x[j - 1] + x[j]);
            }
        }
        let mean = ds.outcome_mean();
        let var = ds.outcome_variance();
        Ok(Sampler {
            ds,
            hp,
            lattice,
            n,
            k,
            cum,
            slots: vec![(0, 0); k],
            x: vec![0.0; n * k],
            beta: vec![0.0; k],
            mu: mean,
            sigma2: if var > 0.0 { var } else { 1.0 },
            col: vec![0.0; n],
            resid: vec![0.0; n],
            g: vec![0.0; k * k],
            chol: vec![0.0; (k + 1) * (k + 1)],
            underflow_events: 0,
        })
    }

    fn load(&mut self, theta: &ParamState) -> Result<()> {
        theta.validate(self.ds.grid())?;
        if theta.k() != self.k {
            return Err(BlissError::DimensionMismatch(format!(
                "state has {} intervals, hyperparameters say {}",
                theta.k(),
                self.k
            )));
        }
        for j in 0..self.k {
            self.slots[j] = self.lattice.locate(theta.centers[j], theta.half_lengths[j])?;
        }
        self.beta.copy_from_slice(&theta.coefficients);
        self.mu = theta.intercept;
        self.sigma2 = theta.variance;
        self.refresh_design();
        Ok(())
    }

    fn state(&self) -> ParamState {
        let t = self.ds.grid().points();
        ParamState {
            centers: self.slots.iter().map(|&(c, _)| t[c]).collect(),
            half_lengths: self
                .slots
                .iter()
                .map(|&(c, l)| self.lattice.entry(c, l).half_length)
                .collect(),
            coefficients: self.beta.clone(),
            intercept: self.mu,
            variance: self.sigma2,
        }
    }

    fn refresh_design(&mut self) {
        let n = self.n;
        for j in 0..self.k {
            let (c, l) = self.slots[j];
            let entry = self.lattice.entry(c, l).clone();
            let mut col = std::mem::take(&mut self.col);
            self.column_into(&entry, &mut col);
            self.x[j * n..(j + 1) * n].copy_from_slice(&col);
            self.col = col;
        }
    }

    /// Curve means over the entry's interval.
    fn column_into(&self, entry: &LatticeEntry, out: &mut [f64]) {
        let n = self.n;
        let grid = self.ds.grid();
        let clipped = entry.span.intersect(&grid.span()).unwrap_or(entry.span);
        let width = clipped.len();
        match (entry.start_index, entry.end_index) {
            (Some(s), Some(e)) => {
                let (lo, hi) = (&self.cum[s * n..(s + 1) * n], &self.cum[e * n..(e + 1) * n]);
                for i in 0..n {
                    out[i] = (hi[i] - lo[i]) / width;
                }
            }
            _ => {
                for i in 0..n {
                    let f = |t: f64| self.running_integral(i, t);
                    out[i] = (f(clipped.end) - f(clipped.start)) / width;
                }
            }
        }
    }

    fn running_integral(&self, i: usize, t: f64) -> f64 {
        let grid = self.ds.grid();
        let pts = grid.points();
        let x = &self.ds.curves()[i];
        if let Some(j) = grid.index_of(t) {
            return self.cum[j * self.n + i];
        }
        let j = pts.partition_point(|&s| s <= t).saturating_sub(1).min(pts.len() - 2);
        let xt = grid.interpolate(x, t);
        self.cum[j * self.n + i] + 0.5 * (t - pts[j]) * (x[j] + xt)
    }

    fn column(&self, j: usize) -> &[f64] {
        &self.x[j * self.n..(j + 1) * self.n]
    }

    /// Ridge matrix `R = G + vλ_max(G) I` of the current design, into `self.g`.
    fn current_ridge(&mut self) {
        let k = self.k;
        for a in 0..k {
            for b in a..k {
                let v = linalg::dot(self.column(a), self.column(b));
                self.g[a * k + b] = v;
                self.g[b * k + a] = v;
            }
        }
        ridge_in_place(k, &mut self.g, self.hp.v);
    }

    fn sse(&self) -> f64 {
        let y = self.ds.outcomes();
        (0..self.n)
            .map(|i| {
                let fit: f64 = (0..self.k).map(|j| self.x[j * self.n + i] * self.beta[j]).sum();
                (y[i] - self.mu - fit).powi(2)
            })
            .sum()
    }

    /// Mean and Cholesky factor of the precision of `(μ, β*)`.
    fn mu_beta_posterior(&mut self) -> Result<(Vec<f64>, Vec<f64>)> {
        let (n, k) = (self.n, self.k);
        let d = k + 1;
        self.current_ridge();
        let y = self.ds.outcomes();
        let mut prec = vec![0.0; d * d];
        let mut rhs = vec![0.0; d];
        prec[0] = n as f64 + 1.0 / self.hp.v0;
        rhs[0] = y.iter().sum();
        for a in 0..k {
            let ca = self.column(a);
            let s: f64 = ca.iter().sum();
            prec[a + 1] = s;
            prec[(a + 1) * d] = s;
            rhs[a + 1] = linalg::dot(ca, y);
            for b in a..k {
                let v = linalg::dot(ca, self.column(b)) + self.g[a * k + b] / n as f64;
                prec[(a + 1) * d + b + 1] = v;
                prec[(b + 1) * d + a + 1] = v;
            }
        }
        let mut l = std::mem::take(&mut self.chol);
        let ok = linalg::cholesky_into(d, &prec, &mut l);
        if ok.is_none() {
            self.chol = l;
            return Err(BlissError::NotPositiveDefinite(
                "posterior precision of (intercept, coefficients)".into(),
            ));
        }
        linalg::chol_solve(d, &l, &mut rhs);
        let factor = l.clone();
        self.chol = l;
        Ok((rhs, factor))
    }

    fn draw_mu_beta(&mut self, rng: &mut BlissRng) -> Result<()> {
        let d = self.k + 1;
        let (mean, l) = self.mu_beta_posterior()?;
        let mut z: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        // Lᵀ w = z gives w with covariance (L Lᵀ)^{-1}
        linalg::backward_solve(d, &l, &mut z);
        let sd = self.sigma2.sqrt();
        self.mu = mean[0] + sd * z[0];
        for j in 0..self.k {
            self.beta[j] = mean[j + 1] + sd * z[j + 1];
        }
        Ok(())
    }

    /// Shape and scale of the inverse-gamma conditional of `σ²`.
    fn sigma2_posterior(&mut self) -> Result<(f64, f64)> {
        let k = self.k;
        self.current_ridge();
        let quad = self.mu * self.mu / self.hp.v0 + linalg::quad_form(k, &self.g, &self.beta) / self.n as f64;
        let shape = (self.n + k + 1) as f64 / 2.0;
        let scale = 0.5 * self.sse() + 0.5 * quad;
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(BlissError::DegeneratePosterior(format!(
                "inverse-gamma scale {scale} for the variance"
            )));
        }
        Ok((shape, scale))
    }

    fn draw_sigma2(&mut self, rng: &mut BlissRng) -> Result<()> {
        let (shape, scale) = self.sigma2_posterior()?;
        let gamma = Gamma::new(shape, 1.0).map_err(|e| BlissError::InvalidParameter(e.to_string()))?;
        let g: f64 = gamma.sample(rng);
        let s2 = scale / g;
        if !(s2 > 0.0 && s2.is_finite()) {
            return Err(BlissError::NonFinite(format!("variance draw {s2}")));
        }
        self.sigma2 = s2;
        Ok(())
    }

    /// `y − μ − Σ_{j≠k} X_j β*_j` into `self.resid`.
    fn partial_residual(&mut self, k: usize) {
        let y = self.ds.outcomes();
        for i in 0..self.n {
            let mut r = y[i] - self.mu;
            for j in 0..self.k {
                if j != k {
                    r -= self.x[j * self.n + i] * self.beta[j];
                }
            }
            self.resid[i] = r;
        }
    }

    /// `−SSE/(2σ²) + log N(β*; 0, nσ²R^{-1})` up to a constant, with
    /// column `k` of the design replaced by the entry's column. Expects
    /// [`Self::partial_residual`] for `k` to be current.
    fn log_weight(&mut self, k: usize, entry: &LatticeEntry, ridge: &mut [f64], factor: &mut [f64]) -> Result<f64> {
        let (n, kk) = (self.n, self.k);
        let mut col = std::mem::take(&mut self.col);
        self.column_into(entry, &mut col);
        let bk = self.beta[k];
        let sse: f64 = self.resid.iter().zip(&col).map(|(r, c)| (r - c * bk).powi(2)).sum();
        for a in 0..kk {
            for b in a..kk {
                let ca: &[f64] = if a == k { &col } else { self.column(a) };
                let cb: &[f64] = if b == k { &col } else { self.column(b) };
                let v = linalg::dot(ca, cb);
                ridge[a * kk + b] = v;
                ridge[b * kk + a] = v;
            }
        }
        self.col = col;
        ridge_in_place(kk, ridge, self.hp.v);
        if linalg::cholesky_into(kk, ridge, factor).is_none() {
            return Err(BlissError::NotPositiveDefinite("ridge-regularized Gram matrix".into()));
        }
        let scale = n as f64 * self.sigma2;
        Ok(-sse / (2.0 * self.sigma2) + 0.5 * linalg::chol_logdet(kk, factor)
            - linalg::quad_form(kk, ridge, &self.beta) / (2.0 * scale))
    }

    /// Candidate `(center, length)` slots for `m_k` with their log weights.
    fn center_weights(&mut self, k: usize) -> Result<Vec<((usize, usize), f64)>> {
        let (c0, l0) = self.slots[k];
        let current = self.lattice.entry(c0, l0).half_length;
        self.partial_residual(k);
        let mut ridge = vec![0.0; self.k * self.k];
        let mut factor = vec![0.0; self.k * self.k];
        let mut out = Vec::with_capacity(self.lattice.center_count());
        for c in 0..self.lattice.center_count() {
            let li = self.lattice.nearest_length(c, current);
            let entry = self.lattice.entry(c, li).clone();
            let w = self.log_weight(k, &entry, &mut ridge, &mut factor)?;
            out.push(((c, li), w));
        }
        Ok(out)
    }

    /// Candidate lengths for `ℓ_k` at the current center with log weights.
    fn length_weights(&mut self, k: usize) -> Result<Vec<((usize, usize), f64)>> {
        let (c, _) = self.slots[k];
        self.partial_residual(k);
        let mut ridge = vec![0.0; self.k * self.k];
        let mut factor = vec![0.0; self.k * self.k];
        let count = self.lattice.entries(c).len();
        let mut out = Vec::with_capacity(count);
        for li in 0..count {
            let entry = self.lattice.entry(c, li).clone();
            let w = self.log_weight(k, &entry, &mut ridge, &mut factor)? + entry.log_prior;
            out.push(((c, li), w));
        }
        Ok(out)
    }

    fn set_slot(&mut self, k: usize, slot: (usize, usize)) {
        self.slots[k] = slot;
        let entry = self.lattice.entry(slot.0, slot.1).clone();
        let mut col = std::mem::take(&mut self.col);
        self.column_into(&entry, &mut col);
        self.x[k * self.n..(k + 1) * self.n].copy_from_slice(&col);
        self.col = col;
    }

    fn draw_slot(&mut self, k: usize, weights: &[((usize, usize), f64)], rng: &mut BlissRng) {
        match draw_categorical(weights.iter().map(|w| w.1), rng) {
            Some(idx) => self.set_slot(k, weights[idx].0),
            None => self.underflow_events += 1,
        }
    }

    fn sweep(&mut self, rng: &mut BlissRng, freeze: bool) -> Result<()> {
        self.draw_mu_beta(rng)?;
        self.draw_sigma2(rng)?;
        if freeze {
            return Ok(());
        }
        for k in 0..self.k {
            let w = self.center_weights(k)?;
            self.draw_slot(k, &w, rng);
        }
        for k in 0..self.k {
            let w = self.length_weights(k)?;
            self.draw_slot(k, &w, rng);
        }
        Ok(())
    }
}

/// Normalized probabilities from log weights, by max subtraction.
pub(crate) fn normalize_log_weights(logw: &[f64]) -> Option<Vec<f64>> {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return None;
    }
    Some(w.into_iter().map(|x| x / total).collect())
}

fn draw_categorical<I: Iterator<Item = f64>>(logw: I, rng: &mut BlissRng) -> Option<usize> {
    let logw: Vec<f64> = logw.collect();
    let probs = normalize_log_weights(&logw)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Some(i);
        }
    }
    // rounding left u above the last partial sum
    probs.iter().rposition(|&p| p > 0.0)
}

fn loaded<'a>(theta: &ParamState, ds: &'a FunctionalDataset, hp: &'a Hyperparameters) -> Result<Sampler<'a>> {
    let mut s = Sampler::new(ds, hp)?;
    s.load(theta)?;
    Ok(s)
}

/// Draw of `(μ, β*)` from its Gaussian full conditional.
pub fn sample_mu_beta(
    theta: &ParamState,
    ds: &FunctionalDataset,
    hp: &Hyperparameters,
    rng: &mut BlissRng,
) -> Result<(f64, Vec<f64>)> {
    let mut s = loaded(theta, ds, hp)?;
    s.draw_mu_beta(rng)?;
    Ok((s.mu, s.beta))
}

/// Shape and scale of the inverse-gamma full conditional of `σ²`.
pub fn sigma2_conditional(theta: &ParamState, ds: &FunctionalDataset, hp: &Hyperparameters) -> Result<(f64, f64)> {
    loaded(theta, ds, hp)?.sigma2_posterior()
}

pub fn sample_sigma2(theta: &ParamState, ds: &FunctionalDataset, hp: &Hyperparameters, rng: &mut BlissRng) -> Result<f64> {
    let mut s = loaded(theta, ds, hp)?;
    s.draw_sigma2(rng)?;
    Ok(s.sigma2)
}

/// One entry of a discrete full conditional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub center: f64,
    pub half_length: f64,
    pub probability: f64,
}

fn candidates(s: &Sampler, weights: &[((usize, usize), f64)]) -> Result<Vec<Candidate>> {
    let logw: Vec<f64> = weights.iter().map(|w| w.1).collect();
    let probs = normalize_log_weights(&logw)
        .ok_or_else(|| BlissError::DegeneratePosterior("all candidate weights underflowed".into()))?;
    let t = s.ds.grid().points();
    Ok(weights
        .iter()
        .zip(probs)
        .map(|(&((c, l), _), probability)| Candidate {
            center: t[c],
            half_length: s.lattice.entry(c, l).half_length,
            probability,
        })
        .collect())
}

/// Full conditional of `m_k` (0-based `k`): one candidate per grid point,
/// carrying the current half-length moved to the nearest admissible value.
pub fn center_conditional(
    theta: &ParamState,
    k: usize,
    ds: &FunctionalDataset,
    hp: &Hyperparameters,
) -> Result<Vec<Candidate>> {
    let mut s = loaded(theta, ds, hp)?;
    check_slot(k, s.k)?;
    let w = s.center_weights(k)?;
    candidates(&s, &w)
}

/// Full conditional of `ℓ_k` (0-based `k`) over the admissible lengths of
/// the current center.
pub fn length_conditional(
    theta: &ParamState,
    k: usize,
    ds: &FunctionalDataset,
    hp: &Hyperparameters,
) -> Result<Vec<Candidate>> {
    let mut s = loaded(theta, ds, hp)?;
    check_slot(k, s.k)?;
    let w = s.length_weights(k)?;
    candidates(&s, &w)
}

fn check_slot(k: usize, count: usize) -> Result<()> {
    if k >= count {
        return Err(BlissError::InvalidParameter(format!(
            "interval index {k} out of range for K = {count}"
        )));
    }
    Ok(())
}

/// Draws a new center for interval `k`; returns `(m_k, ℓ_k)`.
pub fn sample_mk(
    theta: &ParamState,
    k: usize,
    ds: &FunctionalDataset,
    hp: &Hyperparameters,
    rng: &mut BlissRng,
) -> Result<(f64, f64)> {
    let mut s = loaded(theta, ds, hp)?;
    check_slot(k, s.k)?;
    let w = s.center_weights(k)?;
    s.draw_slot(k, &w, rng);
    let st = s.state();
    Ok((st.centers[k], st.half_lengths[k]))
}

/// Draws a new half-length for interval `k`.
pub fn sample_lk(
    theta: &ParamState,
    k: usize,
    ds: &FunctionalDataset,
    hp: &Hyperparameters,
    rng: &mut BlissRng,
) -> Result<f64> {
    let mut s = loaded(theta, ds, hp)?;
    check_slot(k, s.k)?;
    let w = s.length_weights(k)?;
    s.draw_slot(k, &w, rng);
    Ok(s.state().half_lengths[k])
}

/// The default starting point: uniform centers, smallest half-lengths,
/// zero coefficients, `μ = ȳ`, `σ²` = sample variance of `y`.
pub fn initial_state(ds: &FunctionalDataset, hp: &Hyperparameters, rng: &mut BlissRng) -> Result<ParamState> {
    let mut s = Sampler::new(ds, hp)?;
    let p = ds.p();
    for k in 0..hp.k {
        s.slots[k] = (rng.random_range(0..p), 0);
    }
    Ok(s.state())
}

/// Runs the sampler from the default initialization.
pub fn run_gibbs(ds: &FunctionalDataset, hp: &Hyperparameters, cfg: &GibbsConfig) -> Result<Chain> {
    cfg.validate()?;
    let mut rng = rng_from_seed(derive_seed(cfg.seed, stream::GIBBS));
    let init = initial_state(ds, hp, &mut rng)?;
    run_with(ds, hp, cfg, &init, rng)
}

/// Runs the sampler from a given state, which must lie on the interval lattice.
pub fn run_gibbs_from(ds: &FunctionalDataset, hp: &Hyperparameters, cfg: &GibbsConfig, init: &ParamState) -> Result<Chain> {
    cfg.validate()?;
    let rng = rng_from_seed(derive_seed(cfg.seed, stream::GIBBS));
    run_with(ds, hp, cfg, init, rng)
}

fn run_with(
    ds: &FunctionalDataset,
    hp: &Hyperparameters,
    cfg: &GibbsConfig,
    init: &ParamState,
    mut rng: BlissRng,
) -> Result<Chain> {
    let mut s = loaded(init, ds, hp)?;
    let mut states = Vec::with_capacity(cfg.retained());
    for it in 1..=cfg.iterations {
        s.sweep(&mut rng, cfg.freeze_intervals).map_err(|e| BlissError::AtIteration {
            iteration: it,
            source: Box::new(e),
        })?;
        if it > cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0 {
            states.push(s.state());
        }
    }
    Ok(Chain {
        states,
        config: cfg.clone(),
        hyperparameters: hp.clone(),
        fingerprint: ds.fingerprint(),
        rng_algorithm: RNG_ALGORITHM.to_string(),
        underflow_events: s.underflow_events,
    })
}
