//! Stepwise estimate: projection of a curve onto step functions with at most
//! `K0` disjoint pieces of length at least `ε`, by simulated annealing.
//!
//! Pieces are kept as inclusive ranges of grid indices `[lo, hi]`; a piece
//! takes its value on the closed span `[t_lo, t_hi]`. The cost is the
//! trapezoidal approximation of `∫ (d − β̂)²` on the grid.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{BlissError, Result};
use crate::grid::{Span, TimeGrid};
use crate::rng::{derive_seed, rng_from_seed, stream, BlissRng};
use crate::step::{DisjointStepFunction, Piece, PiecewiseConstant};

pub const DEFAULT_SANN_ITERATIONS: usize = 50_000;
const WARMUP_PROPOSALS: usize = 100;
const MOVE_ATTEMPTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SannConfig {
    /// Initial temperature; calibrated from warmup proposals when absent.
    pub temperature: Option<f64>,
    pub iterations: usize,
    pub seed: u64,
    pub k0: usize,
    pub epsilon: f64,
    /// Largest center or length step, in grid steps.
    #[serde(default = "default_max_shift")]
    pub max_shift: usize,
    /// Independent annealing runs from the same start; the best is kept.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_max_shift() -> usize {
    3
}

fn default_restarts() -> usize {
    4
}

impl SannConfig {
    pub fn new(k0: usize, epsilon: f64, seed: u64) -> Self {
        SannConfig {
            temperature: None,
            iterations: DEFAULT_SANN_ITERATIONS,
            seed,
            k0,
            epsilon,
            max_shift: default_max_shift(),
            restarts: default_restarts(),
        }
    }

    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        if self.iterations < 1 {
            return Err(BlissError::InvalidParameter("annealing needs at least one iteration".into()));
        }
        if let Some(te) = self.temperature {
            if !(te > 0.0 && te.is_finite()) {
                return Err(BlissError::InvalidParameter(format!("temperature must be positive, got {te}")));
            }
        }
        if self.k0 < 1 {
            return Err(BlissError::InvalidParameter("K0 must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= grid.span().len()) {
            return Err(BlissError::InvalidParameter(format!(
                "epsilon {} must lie in (0, {}]",
                self.epsilon,
                grid.span().len()
            )));
        }
        if self.max_shift < 1 {
            return Err(BlissError::InvalidParameter("max_shift must be at least 1".into()));
        }
        if self.restarts < 1 {
            return Err(BlissError::InvalidParameter("need at least one annealing run".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SannOutcome {
    pub estimate: DisjointStepFunction,
    pub cost: f64,
    pub initial_cost: f64,
    pub temperature: f64,
    pub acceptance_rate: f64,
}

/// `Te / log((i − 1) + e)` for `i ≥ 1`.
pub fn temperature(i: usize, te: f64) -> f64 {
    te / ((i.max(1) - 1) as f64 + std::f64::consts::E).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Block {
    lo: usize,
    hi: usize,
    value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Move {
    Value,
    Shift,
    Length,
    Append,
    Drop,
}

struct Problem<'a> {
    grid: &'a TimeGrid,
    target: &'a [f64],
    weights: Vec<f64>,
    value_sd: f64,
    k0: usize,
    epsilon: f64,
    max_shift: usize,
    /// For each start index, the smallest end index giving length ≥ ε.
    min_end: Vec<Option<usize>>,
}

impl<'a> Problem<'a> {
    fn new(grid: &'a TimeGrid, target: &'a [f64], cfg: &SannConfig) -> Result<Self> {
        if target.len() != grid.len() {
            return Err(BlissError::DimensionMismatch(format!(
                "curve of length {} for a grid of {} points",
                target.len(),
                grid.len()
            )));
        }
        if target.iter().any(|v| !v.is_finite()) {
            return Err(BlissError::NonFinite("curve to project".into()));
        }
        cfg.validate(grid)?;
        let t = grid.points();
        let slack = grid.tolerance();
        let min_end = (0..t.len())
            .map(|lo| (lo + 1..t.len()).find(|&hi| t[hi] - t[lo] >= cfg.epsilon - slack))
            .collect();
        let mean = target.iter().sum::<f64>() / target.len() as f64;
        let var = target.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (target.len() - 1).max(1) as f64;
        let value_sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        Ok(Problem {
            grid,
            target,
            weights: grid.trapezoid_weights(),
            value_sd,
            k0: cfg.k0,
            epsilon: cfg.epsilon,
            max_shift: cfg.max_shift,
            min_end,
        })
    }

    fn cost(&self, blocks: &[Block]) -> f64 {
        let mut total = 0.0;
        let mut next = 0;
        for b in blocks {
            for j in next..b.lo {
                total += self.weights[j] * self.target[j] * self.target[j];
            }
            for j in b.lo..=b.hi {
                total += self.weights[j] * (b.value - self.target[j]).powi(2);
            }
            next = b.hi + 1;
        }
        for j in next..self.target.len() {
            total += self.weights[j] * self.target[j] * self.target[j];
        }
        total
    }

    fn long_enough(&self, lo: usize, hi: usize) -> bool {
        self.min_end[lo].is_some_and(|e| hi >= e)
    }

    /// Weighted mean of the target over indices `lo..=hi`.
    fn block_mean(&self, lo: usize, hi: usize) -> f64 {
        let (mut s, mut w) = (0.0, 0.0);
        for j in lo..=hi {
            s += self.weights[j] * self.target[j];
            w += self.weights[j];
        }
        if w > 0.0 {
            s / w
        } else {
            0.0
        }
    }

    fn fits(&self, blocks: &[Block], k: usize, lo: usize, hi: usize) -> bool {
        hi < self.grid.len()
            && lo <= hi
            && self.long_enough(lo, hi)
            && (k == 0 || blocks[k - 1].hi < lo)
            && (k + 1 >= blocks.len() || hi < blocks[k + 1].lo)
    }

    /// Whether block `k` may move to `[lo, hi]` without touching the others.
    fn fits_elsewhere(&self, blocks: &[Block], k: usize, lo: usize, hi: usize) -> bool {
        hi < self.grid.len()
            && self.long_enough(lo, hi)
            && blocks
                .iter()
                .enumerate()
                .all(|(j, b)| j == k || hi < b.lo || lo > b.hi)
    }

    /// Minimal-length slots `[lo, min_end(lo)]` disjoint from every block.
    fn free_slots(&self, blocks: &[Block]) -> Vec<(usize, usize)> {
        (0..self.grid.len())
            .filter_map(|lo| self.min_end[lo].map(|hi| (lo, hi)))
            .filter(|&(lo, hi)| blocks.iter().all(|b| hi < b.lo || lo > b.hi))
            .collect()
    }

    fn initial(&self) -> Vec<Block> {
        let mut best: Option<Block> = None;
        for lo in 0..self.grid.len() {
            if let Some(hi) = self.min_end[lo] {
                let value = self.block_mean(lo, hi);
                if best.is_none_or(|b| value.abs() > b.value.abs()) {
                    best = Some(Block { lo, hi, value });
                }
            }
        }
        match best {
            Some(b) if b.value != 0.0 => vec![b],
            _ => Vec::new(),
        }
    }

    fn step(&self, rng: &mut BlissRng) -> isize {
        let s = rng.random_range(1..=self.max_shift) as isize;
        if rng.random::<bool>() {
            s
        } else {
            -s
        }
    }

    fn try_move(&self, blocks: &[Block], mv: Move, rng: &mut BlissRng) -> Option<Vec<Block>> {
        let p = self.grid.len() as isize;
        let mut out = blocks.to_vec();
        match mv {
            Move::Value => {
                let k = rng.random_range(0..blocks.len());
                let noise = Normal::new(0.0, self.value_sd).ok()?;
                out[k].value += noise.sample(rng);
                Some(out)
            }
            Move::Shift if rng.random::<bool>() => (0..MOVE_ATTEMPTS).find_map(|_| {
                // relocation anywhere, keeping the length
                let k = rng.random_range(0..blocks.len());
                let width = blocks[k].hi - blocks[k].lo;
                let lo = rng.random_range(0..self.grid.len() - width);
                let hi = lo + width;
                (lo != blocks[k].lo && self.fits_elsewhere(blocks, k, lo, hi)).then(|| {
                    let mut o: Vec<Block> = blocks.to_vec();
                    o[k] = Block {
                        lo,
                        hi,
                        value: self.block_mean(lo, hi),
                    };
                    o.sort_by_key(|b| b.lo);
                    o
                })
            }),
            Move::Shift => (0..MOVE_ATTEMPTS).find_map(|_| {
                let k = rng.random_range(0..blocks.len());
                let s = self.step(rng);
                let (lo, hi) = (blocks[k].lo as isize + s, blocks[k].hi as isize + s);
                if lo < 0 || hi >= p {
                    return None;
                }
                let (lo, hi) = (lo as usize, hi as usize);
                self.fits(blocks, k, lo, hi).then(|| {
                    let mut o = blocks.to_vec();
                    o[k].lo = lo;
                    o[k].hi = hi;
                    o
                })
            }),
            Move::Length => (0..MOVE_ATTEMPTS).find_map(|_| {
                let k = rng.random_range(0..blocks.len());
                // the width changes by s steps, split between both ends;
                // odd changes put the extra step on a random side
                let s = self.step(rng);
                let left = if s % 2 == 0 || rng.random::<bool>() { s / 2 } else { s - s / 2 };
                let lo = (blocks[k].lo as isize - left).clamp(0, p - 1);
                let hi = (blocks[k].hi as isize + (s - left)).clamp(0, p - 1);
                if lo > hi {
                    return None;
                }
                let (lo, hi) = (lo as usize, hi as usize);
                if lo == blocks[k].lo && hi == blocks[k].hi {
                    return None;
                }
                self.fits(blocks, k, lo, hi).then(|| {
                    let mut o = blocks.to_vec();
                    o[k].lo = lo;
                    o[k].hi = hi;
                    o
                })
            }),
            Move::Append => {
                let slots = self.free_slots(blocks);
                let &(lo, hi) = slots.choose(rng)?;
                out.push(Block {
                    lo,
                    hi,
                    value: self.block_mean(lo, hi),
                });
                out.sort_by_key(|b| b.lo);
                Some(out)
            }
            Move::Drop => {
                let k = rng.random_range(0..blocks.len());
                out.remove(k);
                Some(out)
            }
        }
    }

    fn propose(&self, blocks: &[Block], rng: &mut BlissRng) -> Vec<Block> {
        let mut moves: Vec<Move> = Vec::with_capacity(5);
        if !blocks.is_empty() {
            moves.extend([Move::Value, Move::Shift, Move::Length]);
        }
        if blocks.len() < self.k0 {
            moves.push(Move::Append);
        }
        if !blocks.is_empty() {
            moves.push(Move::Drop);
        }
        while !moves.is_empty() {
            let i = rng.random_range(0..moves.len());
            if let Some(next) = self.try_move(blocks, moves[i], rng) {
                return next;
            }
            moves.swap_remove(i);
        }
        blocks.to_vec()
    }

    fn to_function(&self, blocks: &[Block]) -> Result<DisjointStepFunction> {
        let t = self.grid.points();
        DisjointStepFunction::new(
            blocks
                .iter()
                .map(|b| Piece {
                    span: Span::new(t[b.lo], t[b.hi]),
                    value: b.value,
                })
                .collect(),
            self.epsilon,
        )
    }

    fn from_function(&self, f: &DisjointStepFunction) -> Result<Vec<Block>> {
        if f.len() > self.k0 {
            return Err(BlissError::InvalidParameter(format!(
                "{} pieces exceed K0 = {}",
                f.len(),
                self.k0
            )));
        }
        let blocks: Vec<Block> = f
            .piece_list()
            .iter()
            .map(|p| {
                let at = |t: f64| {
                    self.grid.index_of(t).ok_or_else(|| {
                        BlissError::InvalidParameter(format!("piece endpoint {t} is not a grid point"))
                    })
                };
                Ok(Block {
                    lo: at(p.span.start)?,
                    hi: at(p.span.end)?,
                    value: p.value,
                })
            })
            .collect::<Result<_>>()?;
        for (k, b) in blocks.iter().enumerate() {
            if !self.fits(&blocks, k, b.lo, b.hi) {
                return Err(BlissError::InvalidParameter(format!(
                    "piece [{}, {}] is shorter than epsilon or overlaps a neighbor",
                    self.grid.points()[b.lo],
                    self.grid.points()[b.hi]
                )));
            }
        }
        Ok(blocks)
    }

    /// Initial temperature making half of the cost-increasing warmup
    /// proposals acceptable on average.
    fn calibrate(&self, start: &[Block], rng: &mut BlissRng) -> f64 {
        let c0 = self.cost(start);
        let ups: Vec<f64> = (0..WARMUP_PROPOSALS)
            .map(|_| self.cost(&self.propose(start, rng)) - c0)
            .filter(|&d| d > 0.0)
            .collect();
        if ups.is_empty() {
            return 1.0;
        }
        let rate = |te: f64| ups.iter().map(|d| (-d / te).exp()).sum::<f64>() / ups.len() as f64;
        let (mut lo, mut hi) = (-60.0f64, 60.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if rate(mid.exp()) < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi)).exp()
    }

    fn anneal(&self, start: Vec<Block>, cfg: &SannConfig, rng: &mut BlissRng) -> Result<SannOutcome> {
        let te = match cfg.temperature {
            Some(te) => te,
            None => self.calibrate(&start, rng),
        };
        let initial_cost = self.cost(&start);
        let mut current = start.clone();
        let mut current_cost = initial_cost;
        let mut best = start;
        let mut best_cost = initial_cost;
        let mut accepted = 0usize;
        for i in 1..=cfg.iterations {
            let proposal = self.propose(&current, rng);
            let cost = self.cost(&proposal);
            let delta = cost - current_cost;
            let accept = delta <= 0.0 || rng.random::<f64>() < (-delta / temperature(i, te)).exp();
            if accept {
                accepted += 1;
                current = proposal;
                current_cost = cost;
                if current_cost < best_cost {
                    best_cost = current_cost;
                    best = current.clone();
                }
            }
        }
        Ok(SannOutcome {
            estimate: self.to_function(&best)?,
            cost: best_cost,
            initial_cost,
            temperature: te,
            acceptance_rate: accepted as f64 / cfg.iterations as f64,
        })
    }
}

/// Trapezoidal `∫ (d − β̂)²` of a step function evaluated at grid points.
pub fn stepwise_cost<F: PiecewiseConstant + ?Sized>(d: &F, target: &[f64], grid: &TimeGrid) -> f64 {
    let sq: Vec<f64> = d.eval_on(grid).iter().zip(target).map(|(a, b)| (a - b).powi(2)).collect();
    grid.integrate(&sq)
}

/// One annealing proposal from `current`.
pub fn sann_propose(
    current: &DisjointStepFunction,
    target: &[f64],
    grid: &TimeGrid,
    cfg: &SannConfig,
    rng: &mut BlissRng,
) -> Result<DisjointStepFunction> {
    let problem = Problem::new(grid, target, cfg)?;
    let blocks = problem.from_function(current)?;
    problem.to_function(&problem.propose(&blocks, rng))
}

/// Anneals from the best single `ε`-window piece.
pub fn stepwise_estimate(target: &[f64], grid: &TimeGrid, cfg: &SannConfig) -> Result<SannOutcome> {
    let problem = Problem::new(grid, target, cfg)?;
    best_of_runs(&problem, problem.initial(), cfg)
}

/// Anneals from a given admissible step function.
pub fn stepwise_estimate_from(
    target: &[f64],
    grid: &TimeGrid,
    cfg: &SannConfig,
    initial: &DisjointStepFunction,
) -> Result<SannOutcome> {
    let problem = Problem::new(grid, target, cfg)?;
    let start = problem.from_function(initial)?;
    best_of_runs(&problem, start, cfg)
}

fn best_of_runs(problem: &Problem, start: Vec<Block>, cfg: &SannConfig) -> Result<SannOutcome> {
    let base = derive_seed(cfg.seed, stream::SANN);
    let mut best: Option<SannOutcome> = None;
    for run in 0..cfg.restarts as u64 {
        let mut rng = rng_from_seed(derive_seed(base, run));
        let out = problem.anneal(start.clone(), cfg, &mut rng)?;
        if best.as_ref().is_none_or(|b| out.cost < b.cost) {
            best = Some(out);
        }
    }
    best.ok_or_else(|| BlissError::InvalidParameter("need at least one annealing run".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid10() -> TimeGrid {
        TimeGrid::regular(0.0, 0.9, 10).unwrap()
    }

    fn cfg(k0: usize) -> SannConfig {
        SannConfig {
            iterations: 2000,
            ..SannConfig::new(k0, 0.1, 7)
        }
    }

    #[test]
    fn temperature_schedule() {
        assert_eq!(temperature(1, 3.0), 3.0);
        assert!((temperature(2, 1.0) - 1.0 / (1.0 + std::f64::consts::E).ln()).abs() < 1e-15);
        assert!((1..1000).all(|i| temperature(i + 1, 1.0) < temperature(i, 1.0)));
    }

    #[test]
    fn zero_target_gives_zero_function() {
        let g = grid10();
        let out = stepwise_estimate(&[0.0; 10], &g, &cfg(2)).unwrap();
        assert!(out.estimate.is_empty());
        assert_eq!(out.cost, 0.0);
    }

    #[test]
    fn exact_step_is_a_fixed_point() {
        let g = grid10();
        let f = DisjointStepFunction::new(
            vec![Piece {
                span: Span::new(0.2, 0.5),
                value: 2.0,
            }],
            0.1,
        )
        .unwrap();
        let target = f.eval_on(&g);
        let out = stepwise_estimate_from(&target, &g, &cfg(1), &f).unwrap();
        assert_eq!(out.estimate, f);
        assert_eq!(out.cost, 0.0);
    }

    #[test]
    fn proposals_stay_admissible() {
        let g = grid10();
        let target: Vec<f64> = g.points().iter().map(|t| (6.0 * t).sin()).collect();
        let c = cfg(2);
        let mut rng = rng_from_seed(1);
        let mut f = DisjointStepFunction::zero(0.1).unwrap();
        for _ in 0..2000 {
            f = sann_propose(&f, &target, &g, &c, &mut rng).unwrap();
            assert!(f.len() <= 2);
        }
    }

    #[test]
    fn move_edge_cases() {
        let g = grid10();
        let target = vec![1.0; 10];
        let one = DisjointStepFunction::new(
            vec![Piece {
                span: Span::new(0.0, 0.9),
                value: 1.0,
            }],
            0.1,
        )
        .unwrap();
        // at the K0 cap nothing is appended; a value move keeps the span
        let mut rng = rng_from_seed(3);
        let (mut saw_drop, mut saw_value) = (false, false);
        for _ in 0..200 {
            let next = sann_propose(&one, &target, &g, &cfg(1), &mut rng).unwrap();
            assert!(next.len() <= 1);
            match next.piece_list().first() {
                None => saw_drop = true,
                Some(p) if p.span == one.piece_list()[0].span => {
                    assert_ne!(p.value, 1.0);
                    saw_value = true;
                }
                Some(p) => assert!(p.span.len() < 0.9),
            }
        }
        assert!(saw_drop && saw_value);
    }

    #[test]
    fn cost_helpers_agree() {
        let g = grid10();
        let target: Vec<f64> = g.points().iter().map(|t| t * t - 0.3).collect();
        let c = cfg(2);
        let problem = Problem::new(&g, &target, &c).unwrap();
        let blocks = vec![Block { lo: 1, hi: 3, value: 0.4 }, Block { lo: 6, hi: 8, value: -0.2 }];
        let f = problem.to_function(&blocks).unwrap();
        assert!((problem.cost(&blocks) - stepwise_cost(&f, &target, &g)).abs() < 1e-14);
    }
}
