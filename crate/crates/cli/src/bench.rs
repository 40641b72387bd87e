//! Benchmark over numbered simulated datasets and hyperparameter sweeps.
//!
//! Every (dataset, seed) cell and every sweep cell is independent and runs
//! in parallel. A failing cell is reported in its table row and does not
//! stop the others.

use std::path::Path;

use bliss_core::estimate::{l2_error, piecewise_support, support_error, SannConfig, DEFAULT_HEATMAP_BINS};
use bliss_core::simulate::{dataset_config, generate, KernelDistance};
use bliss_core::{default_hyperparameters, run_gibbs, GibbsConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifacts;
use crate::error::{CliError, Result};
use crate::pipeline;

fn default_n() -> usize {
    100
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_k() -> usize {
    3
}
fn default_iterations() -> usize {
    10_000
}
fn default_burn_in() -> usize {
    1_000
}
fn default_thin() -> usize {
    1
}
fn default_gamma() -> f64 {
    0.5
}
fn default_sann_iterations() -> usize {
    bliss_core::estimate::DEFAULT_SANN_ITERATIONS
}

/// Bench configuration, read from TOML. Missing keys take the defaults of
/// the simulation study (n = p = 100, K = 3, 10⁴ iterations).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    /// Dataset numbers 1–27.
    #[serde(default)]
    pub datasets: Vec<usize>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_n")]
    pub p: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_sann_iterations")]
    pub sann_iterations: usize,
    #[serde(default)]
    pub kernel_distance: KernelDistance,
    #[serde(default)]
    pub sweep: Sweep,
}

/// One-at-a-time variations of `a`, `v` and `K` around the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// Datasets for the sweep; the main list when empty.
    #[serde(default)]
    pub datasets: Vec<usize>,
    #[serde(default)]
    pub a: Vec<f64>,
    #[serde(default)]
    pub v: Vec<f64>,
    #[serde(default)]
    pub k: Vec<usize>,
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: BenchConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let sweep_sets = self.sweep.datasets.iter();
        if let Some(d) = self.datasets.iter().chain(sweep_sets).find(|d| !(1..=27).contains(*d)) {
            return Err(CliError::Config(format!("dataset number must lie in 1..=27, got {d}")));
        }
        GibbsConfig::new(self.iterations, self.burn_in, self.thin, 0)?;
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(CliError::Config(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        Ok(())
    }

    fn sweep_datasets(&self) -> &[usize] {
        if self.sweep.datasets.is_empty() {
            &self.datasets
        } else {
            &self.sweep.datasets
        }
    }
}

/// Hyperparameter override of a sweep cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Override {
    None,
    A(f64),
    V(f64),
    K(usize),
}

impl Override {
    fn label(&self) -> (&'static str, String) {
        match self {
            Override::None => ("", String::new()),
            Override::A(x) => ("a", x.to_string()),
            Override::V(x) => ("v", x.to_string()),
            Override::K(k) => ("K", k.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub dataset: usize,
    pub seed: u64,
    pub tweak: Override,
}

/// Errors of one fitted cell against its simulated truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellErrors {
    pub bayes_support: f64,
    pub stepwise_support: f64,
    pub stepwise_l2: f64,
    pub l2_bliss: f64,
}

pub fn run_cell(cfg: &BenchConfig, cell: &Cell) -> Result<CellErrors> {
    let mut sim = dataset_config(cell.dataset, cfg.n, cfg.p, cell.seed)?;
    sim.kernel_distance = cfg.kernel_distance;
    let (ds, truth) = generate(&sim)?;
    let k = match cell.tweak {
        Override::K(k) => k,
        _ => cfg.k,
    };
    let mut hp = default_hyperparameters(&ds, k)?;
    hp.gamma = cfg.gamma;
    match cell.tweak {
        Override::A(a) => hp.a = a,
        Override::V(v) => hp.v = v,
        _ => {}
    }
    let gibbs = GibbsConfig::new(cfg.iterations, cfg.burn_in, cfg.thin, cell.seed)?;
    let chain = run_gibbs(&ds, &hp, &gibbs)?;
    let mut sann = SannConfig::new(hp.k0, hp.epsilon, cell.seed);
    sann.iterations = cfg.sann_iterations;
    let s = pipeline::summarize(&chain, ds.grid(), &sann, &[cfg.gamma], DEFAULT_HEATMAP_BINS)?;
    let grid = ds.grid();
    let step_values = bliss_core::PiecewiseConstant::eval_on(&s.stepwise.estimate, grid);
    Ok(CellErrors {
        bayes_support: support_error(&s.supports[0].intervals, &truth.support),
        stepwise_support: support_error(&piecewise_support(&s.stepwise.estimate), &truth.support),
        stepwise_l2: l2_error(grid, &step_values, &truth.beta)?,
        l2_bliss: l2_error(grid, &s.beta_l2, &truth.beta)?,
    })
}

pub fn main_cells(cfg: &BenchConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &dataset in &cfg.datasets {
        for &seed in &cfg.seeds {
            cells.push(Cell {
                dataset,
                seed,
                tweak: Override::None,
            });
        }
    }
    cells
}

pub fn sweep_cells(cfg: &BenchConfig) -> Vec<Cell> {
    let tweaks = cfg
        .sweep
        .a
        .iter()
        .map(|&a| Override::A(a))
        .chain(cfg.sweep.v.iter().map(|&v| Override::V(v)))
        .chain(cfg.sweep.k.iter().map(|&k| Override::K(k)));
    let mut cells = Vec::new();
    for tweak in tweaks {
        for &dataset in cfg.sweep_datasets() {
            for &seed in &cfg.seeds {
                cells.push(Cell { dataset, seed, tweak });
            }
        }
    }
    cells
}

/// Bench output: one entry per cell, in configuration order.
#[derive(Debug)]
pub struct BenchReport {
    pub main: Vec<(Cell, std::result::Result<CellErrors, String>)>,
    pub sweep: Vec<(Cell, std::result::Result<CellErrors, String>)>,
}

pub fn run_bench(cfg: &BenchConfig) -> BenchReport {
    let run = |cells: Vec<Cell>| {
        cells
            .into_par_iter()
            .map(|c| {
                let r = run_cell(cfg, &c).map_err(|e| e.to_string());
                (c, r)
            })
            .collect::<Vec<_>>()
    };
    BenchReport {
        main: run(main_cells(cfg)),
        sweep: run(sweep_cells(cfg)),
    }
}

fn dataset_columns(cfg: &BenchConfig, cell: &Cell) -> Vec<String> {
    match dataset_config(cell.dataset, cfg.n, cfg.p, cell.seed) {
        Ok(s) => vec![
            cell.dataset.to_string(),
            s.shape.to_string(),
            s.r.to_string(),
            format!("{:.6}", s.zeta),
            cell.seed.to_string(),
        ],
        Err(_) => vec![cell.dataset.to_string(), String::new(), String::new(), String::new(), cell.seed.to_string()],
    }
}

fn table(
    header: &[&str],
    rows: impl Iterator<Item = (Vec<String>, std::result::Result<Vec<f64>, String>)>,
    width: usize,
) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Data(e.to_string());
    w.write_record(header).map_err(csv_err)?;
    for (mut lead, values) in rows {
        match values {
            Ok(v) => {
                lead.extend(v.iter().map(|x| x.to_string()));
                lead.push("ok".into());
            }
            Err(msg) => {
                lead.extend(std::iter::repeat_n(String::new(), width));
                lead.push(format!("error: {msg}"));
            }
        }
        w.write_record(&lead).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| CliError::Data(e.to_string()))
}

const LEAD: [&str; 5] = ["dataset", "shape", "r", "zeta", "seed"];

/// Writes `table1.csv` (support errors), `table2.csv` (L² errors) and
/// `table3.csv` (sweep rows).
pub fn write_tables(dir: &Path, cfg: &BenchConfig, report: &BenchReport) -> Result<Vec<String>> {
    let t1_header: Vec<&str> = LEAD.iter().copied().chain(["bayes_support_error", "stepwise_support_error", "status"]).collect();
    let t1 = table(
        &t1_header,
        report.main.iter().map(|(c, r)| {
            (
                dataset_columns(cfg, c),
                r.clone().map(|e| vec![e.bayes_support, e.stepwise_support]),
            )
        }),
        2,
    )?;
    let t2_header: Vec<&str> = LEAD.iter().copied().chain(["stepwise_l2_error", "l2_bliss_error", "status"]).collect();
    let t2 = table(
        &t2_header,
        report.main.iter().map(|(c, r)| {
            (
                dataset_columns(cfg, c),
                r.clone().map(|e| vec![e.stepwise_l2, e.l2_bliss]),
            )
        }),
        2,
    )?;
    let t3_header: Vec<&str> = ["parameter", "value"]
        .into_iter()
        .chain(LEAD)
        .chain([
            "bayes_support_error",
            "stepwise_support_error",
            "stepwise_l2_error",
            "l2_bliss_error",
            "status",
        ])
        .collect();
    let t3 = table(
        &t3_header,
        report.sweep.iter().map(|(c, r)| {
            let (name, value) = c.tweak.label();
            let mut lead = vec![name.to_owned(), value];
            lead.extend(dataset_columns(cfg, c));
            (
                lead,
                r.clone()
                    .map(|e| vec![e.bayes_support, e.stepwise_support, e.stepwise_l2, e.l2_bliss]),
            )
        }),
        4,
    )?;
    let files = [("table1.csv", t1), ("table2.csv", t2), ("table3.csv", t3)];
    for (name, bytes) in &files {
        artifacts::write_atomic(&dir.join(name), bytes)?;
    }
    Ok(files.iter().map(|(n, _)| n.to_string()).collect())
}
