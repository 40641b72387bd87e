//! Command-line definitions and the command implementations.

use std::path::{Path, PathBuf};
use std::time::Instant;

use bliss_core::estimate::{
    l2_error, support_error, DEFAULT_HEATMAP_BINS, DEFAULT_SANN_ITERATIONS,
};
use bliss_core::simulate::{dataset_config, generate, KernelDistance, Shape, SimConfig};
use bliss_core::{
    default_hyperparameters, run_gibbs, FunctionalDataset, GibbsConfig, Hyperparameters, IntervalSet, TimeGrid,
};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::artifacts::{self, EstimateFile, Manifest};
use crate::bench::{self, BenchConfig};
use crate::error::{CliError, Result};
use crate::ingest;
use crate::pipeline;

#[derive(Debug, Parser)]
#[command(name = "bliss", version, about = "Bayesian functional linear regression with sparse step-function coefficients")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate curves and outcomes from one of the benchmark designs.
    Simulate(SimulateArgs),
    /// Run the Gibbs sampler and write all posterior summaries.
    Fit(FitArgs),
    /// Recompute the summaries of an existing chain file.
    Summarize(SummarizeArgs),
    /// Compare an estimate file with a simulated truth.
    Evaluate(EvaluateArgs),
    /// Run a grid of simulated datasets and write error tables.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Numbered design 1–27; overrides --shape, --r and --zeta.
    #[arg(long)]
    pub dataset: Option<usize>,
    #[arg(long, required_unless_present = "dataset")]
    pub shape: Option<Shape>,
    /// Signal-to-noise ratio.
    #[arg(long, required_unless_present = "dataset")]
    pub r: Option<f64>,
    /// Kernel bandwidth of the curve covariance.
    #[arg(long, required_unless_present = "dataset")]
    pub zeta: Option<f64>,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub p: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub marginal_sd: f64,
    /// Unit of kernel distances: steps or time.
    #[arg(long, default_value = "steps")]
    pub kernel_distance: KernelDistance,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Replay the run recorded in a manifest; other model flags are ignored.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, required_unless_present = "manifest")]
    pub curves: Option<PathBuf>,
    #[arg(long, required_unless_present = "manifest")]
    pub y: Option<PathBuf>,
    /// Number of intervals.
    #[arg(long = "K", visible_alias = "k", required_unless_present = "manifest")]
    pub k: Option<usize>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub v: Option<f64>,
    #[arg(long)]
    pub v0: Option<f64>,
    /// Support-loss weights; one support file is written per value.
    #[arg(long, num_args = 1.., default_values_t = [0.5])]
    pub gamma: Vec<f64>,
    #[arg(long)]
    pub k0: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub iters: usize,
    /// Defaults to a tenth of the iterations.
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub summary: SummaryArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SummaryArgs {
    #[arg(long, default_value_t = DEFAULT_SANN_ITERATIONS)]
    pub sann_iters: usize,
    #[arg(long, default_value_t = 4)]
    pub sann_restarts: usize,
    /// Value bins of the heat map.
    #[arg(long, default_value_t = DEFAULT_HEATMAP_BINS)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long)]
    pub chain: PathBuf,
    #[arg(long, num_args = 1.., default_values_t = [0.5])]
    pub gamma: Vec<f64>,
    #[command(flatten)]
    pub summary: SummaryArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// A support file, a stepwise pieces file or a one-row curve file.
    #[arg(long)]
    pub estimate: PathBuf,
    /// `truth.json` written by `simulate`.
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    pub threads: Option<usize>,
}

pub fn run(cli: Cli, argv: Vec<String>) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a, argv),
        Command::Fit(a) => fit(&a, argv),
        Command::Summarize(a) => summarize(&a, argv),
        Command::Evaluate(a) => evaluate(&a),
        Command::Bench(a) => run_bench(&a, argv),
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

fn check_gammas(gammas: &[f64]) -> Result<()> {
    if gammas.is_empty() {
        return Err(CliError::Config("at least one gamma is required".into()));
    }
    if let Some(g) = gammas.iter().find(|g| !(0.0..=1.0).contains(*g)) {
        return Err(CliError::Config(format!("gamma must lie in [0, 1], got {g}")));
    }
    Ok(())
}

pub fn simulate(args: &SimulateArgs, argv: Vec<String>) -> Result<()> {
    let mut cfg = match args.dataset {
        Some(d) => dataset_config(d, args.n, args.p, args.seed)?,
        None => {
            let missing = |f: &str| CliError::Config(format!("--{f} is required without --dataset"));
            SimConfig::new(
                args.shape.ok_or_else(|| missing("shape"))?,
                args.r.ok_or_else(|| missing("r"))?,
                args.zeta.ok_or_else(|| missing("zeta"))?,
                args.n,
                args.p,
                args.seed,
            )
        }
    };
    cfg.mu = args.mu;
    cfg.marginal_sd = args.marginal_sd;
    cfg.kernel_distance = args.kernel_distance;
    simulate_config(&cfg, &args.out, argv)
}

/// Writes curves, outcomes, truth and manifest for one simulation.
pub fn simulate_config(cfg: &SimConfig, out: &Path, argv: Vec<String>) -> Result<()> {
    artifacts::ensure_dir(out)?;
    let start = Instant::now();
    let (ds, truth) = generate(cfg)?;
    let mut m = Manifest::new("simulate", argv, cfg.seed);
    m.timings.insert("simulate".into(), start.elapsed().as_secs_f64());
    artifacts::write_curve_table(&out.join(artifacts::CURVES_FILE), ds.grid(), ds.curves())?;
    artifacts::write_outcomes(&out.join(artifacts::OUTCOMES_FILE), ds.outcomes())?;
    artifacts::write_truth(&out.join(artifacts::TRUTH_FILE), &truth)?;
    m.simulation = Some(cfg.clone());
    m.dataset_fingerprint = Some(ds.fingerprint());
    m.artifacts = vec![
        artifacts::CURVES_FILE.into(),
        artifacts::OUTCOMES_FILE.into(),
        artifacts::TRUTH_FILE.into(),
    ];
    artifacts::write_manifest(&out.join(artifacts::MANIFEST_FILE), &m)
}

/// Everything `fit` needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct FitPlan {
    pub curves: PathBuf,
    pub outcomes: PathBuf,
    pub hyperparameters: Option<Hyperparameters>,
    pub k: usize,
    pub gibbs: GibbsConfig,
    pub gammas: Vec<f64>,
    pub sann_iterations: usize,
    pub sann_restarts: usize,
    pub bins: usize,
    pub fingerprint: Option<String>,
}

fn plan_from_args(args: &FitArgs, ds: &FunctionalDataset) -> Result<Hyperparameters> {
    let k = args.k.ok_or_else(|| CliError::Config("--K is required".into()))?;
    let mut hp = default_hyperparameters(ds, k)?;
    if let Some(a) = args.a {
        hp.a = a;
    }
    if let Some(b) = args.b {
        hp.b = b;
    }
    if let Some(v) = args.v {
        hp.v = v;
    }
    if let Some(v0) = args.v0 {
        hp.v0 = v0;
    }
    if let Some(k0) = args.k0 {
        hp.k0 = k0;
    }
    if let Some(e) = args.epsilon {
        hp.epsilon = e;
    }
    hp.gamma = args.gamma[0];
    Ok(hp)
}

fn plan_from_manifest(path: &Path) -> Result<FitPlan> {
    let m = artifacts::read_manifest(path)?;
    if m.command != "fit" {
        return Err(CliError::Config(format!(
            "{} records a {} run, not a fit",
            path.display(),
            m.command
        )));
    }
    let input = |key: &str| {
        m.inputs
            .get(key)
            .cloned()
            .ok_or_else(|| CliError::Config(format!("manifest has no {key} input")))
    };
    let hp = m
        .hyperparameters
        .clone()
        .ok_or_else(|| CliError::Config("manifest has no hyperparameters".into()))?;
    let sann = m
        .sann
        .clone()
        .ok_or_else(|| CliError::Config("manifest has no annealing settings".into()))?;
    Ok(FitPlan {
        curves: input("curves")?,
        outcomes: input("y")?,
        k: hp.k,
        hyperparameters: Some(hp),
        gibbs: m
            .gibbs
            .clone()
            .ok_or_else(|| CliError::Config("manifest has no sampler settings".into()))?,
        gammas: m.gammas.clone(),
        sann_iterations: sann.iterations,
        sann_restarts: sann.restarts,
        bins: m.heatmap_bins.unwrap_or(DEFAULT_HEATMAP_BINS),
        fingerprint: m.dataset_fingerprint.clone(),
    })
}

pub fn fit(args: &FitArgs, argv: Vec<String>) -> Result<()> {
    let (plan, ds) = match &args.manifest {
        Some(path) => {
            let plan = plan_from_manifest(path)?;
            let ds = ingest::ingest_dataset(&plan.curves, &plan.outcomes)?;
            if let Some(f) = &plan.fingerprint {
                if *f != ds.fingerprint() {
                    return Err(CliError::Data(format!(
                        "input data changed since the manifest was written (fingerprint {} vs {f})",
                        ds.fingerprint()
                    )));
                }
            }
            (plan, ds)
        }
        None => {
            let curves = args.curves.clone().ok_or_else(|| CliError::Config("--curves is required".into()))?;
            let outcomes = args.y.clone().ok_or_else(|| CliError::Config("--y is required".into()))?;
            let ds = ingest::ingest_dataset(&curves, &outcomes)?;
            let hp = plan_from_args(args, &ds)?;
            let burn_in = args.burnin.unwrap_or(args.iters / 10);
            let gibbs = GibbsConfig::new(args.iters, burn_in, args.thin, args.seed)?;
            let plan = FitPlan {
                curves: absolute(&curves),
                outcomes: absolute(&outcomes),
                k: hp.k,
                hyperparameters: Some(hp),
                gibbs,
                gammas: args.gamma.clone(),
                sann_iterations: args.summary.sann_iters,
                sann_restarts: args.summary.sann_restarts,
                bins: args.summary.bins,
                fingerprint: None,
            };
            (plan, ds)
        }
    };
    fit_plan(&plan, &ds, &args.out, argv)
}

/// Runs the sampler and all summaries, writing every artifact into `out`.
pub fn fit_plan(plan: &FitPlan, ds: &FunctionalDataset, out: &Path, argv: Vec<String>) -> Result<()> {
    check_gammas(&plan.gammas)?;
    let hp = match &plan.hyperparameters {
        Some(hp) => hp.clone(),
        None => default_hyperparameters(ds, plan.k)?,
    };
    hp.validate(&ds.grid().domain())?;
    plan.gibbs.validate()?;
    artifacts::ensure_dir(out)?;

    let mut m = Manifest::new("fit", argv, plan.gibbs.seed);
    m.inputs.insert("curves".into(), plan.curves.clone());
    m.inputs.insert("y".into(), plan.outcomes.clone());
    m.dataset_fingerprint = Some(ds.fingerprint());

    let start = Instant::now();
    let chain = run_gibbs(ds, &hp, &plan.gibbs).map_err(|e| CliError::from(e).context("gibbs sampler"))?;
    m.timings.insert("gibbs".into(), start.elapsed().as_secs_f64());
    artifacts::write_chain(&out.join(artifacts::CHAIN_FILE), ds.grid(), &chain)?;

    let mut sann = pipeline::sann_config_for(&chain, plan.sann_iterations);
    sann.restarts = plan.sann_restarts;
    let start = Instant::now();
    let summary = pipeline::summarize(&chain, ds.grid(), &sann, &plan.gammas, plan.bins)?;
    m.timings.insert("summaries".into(), start.elapsed().as_secs_f64());

    let mut names = vec![artifacts::CHAIN_FILE.to_owned()];
    names.extend(pipeline::write_summary(out, ds.grid(), &summary)?);
    pipeline::record_diagnostics(&mut m, &chain, &summary);
    m.hyperparameters = Some(hp);
    m.gibbs = Some(plan.gibbs.clone());
    m.sann = Some(sann);
    m.gammas = plan.gammas.clone();
    m.heatmap_bins = Some(plan.bins);
    m.artifacts = names;
    artifacts::write_manifest(&out.join(artifacts::MANIFEST_FILE), &m)
}

pub fn summarize(args: &SummarizeArgs, argv: Vec<String>) -> Result<()> {
    check_gammas(&args.gamma)?;
    let file = artifacts::read_chain(&args.chain)?;
    artifacts::ensure_dir(&args.out)?;
    let mut sann = pipeline::sann_config_for(&file.chain, args.summary.sann_iters);
    sann.restarts = args.summary.sann_restarts;
    let start = Instant::now();
    let summary = pipeline::summarize(&file.chain, &file.grid, &sann, &args.gamma, args.summary.bins)?;
    let mut m = Manifest::new("summarize", argv, file.chain.config.seed);
    m.timings.insert("summaries".into(), start.elapsed().as_secs_f64());
    m.inputs.insert("chain".into(), absolute(&args.chain));
    m.dataset_fingerprint = Some(file.chain.fingerprint.clone());
    m.artifacts = pipeline::write_summary(&args.out, &file.grid, &summary)?;
    pipeline::record_diagnostics(&mut m, &file.chain, &summary);
    m.hyperparameters = Some(file.chain.hyperparameters.clone());
    m.gibbs = Some(file.chain.config.clone());
    m.sann = Some(sann);
    m.gammas = args.gamma.clone();
    m.heatmap_bins = Some(args.summary.bins);
    artifacts::write_manifest(&args.out.join(artifacts::MANIFEST_FILE), &m)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub support_error: f64,
    /// Absent for support-only estimates.
    pub l2_error: Option<f64>,
}

/// Union of the grid cells whose two end values are both nonzero.
fn nonzero_cells(grid: &TimeGrid, values: &[f64]) -> IntervalSet {
    IntervalSet::from_spans(
        (0..grid.cell_count())
            .filter(|&j| values[j] != 0.0 && values[j + 1] != 0.0)
            .map(|j| grid.cell(j)),
    )
}

fn same_grid(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9 * (1.0 + y.abs()))
}

pub fn evaluate_files(estimate: &Path, truth: &Path) -> Result<Evaluation> {
    let truth = artifacts::read_truth(truth)?;
    let grid = TimeGrid::new(truth.grid.clone())?;
    match artifacts::read_estimate(estimate)? {
        EstimateFile::Support(set) => Ok(Evaluation {
            support_error: support_error(&set, &truth.support),
            l2_error: None,
        }),
        EstimateFile::Pieces(pieces) => {
            let support = IntervalSet::from_spans(pieces.iter().filter(|p| p.value != 0.0).map(|p| p.span));
            let values: Vec<f64> = grid
                .points()
                .iter()
                .map(|&t| pieces.iter().filter(|p| p.span.contains(t)).map(|p| p.value).sum())
                .collect();
            Ok(Evaluation {
                support_error: support_error(&support, &truth.support),
                l2_error: Some(l2_error(&grid, &values, &truth.beta)?),
            })
        }
        EstimateFile::Curve { grid: g, values } => {
            if !same_grid(g.points(), grid.points()) {
                return Err(CliError::Data(format!(
                    "{}: estimate grid differs from the truth grid",
                    estimate.display()
                )));
            }
            Ok(Evaluation {
                support_error: support_error(&nonzero_cells(&grid, &values), &truth.support),
                l2_error: Some(l2_error(&grid, &values, &truth.beta)?),
            })
        }
    }
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let e = evaluate_files(&args.estimate, &args.truth)?;
    let line = serde_json::to_string(&e).map_err(|e| CliError::Data(e.to_string()))?;
    println!("{line}");
    Ok(())
}

pub fn run_bench(args: &BenchArgs, argv: Vec<String>) -> Result<()> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| CliError::io(&args.config, e))?;
    let cfg = BenchConfig::from_toml(&text)?;
    artifacts::ensure_dir(&args.out)?;
    let start = Instant::now();
    let report = match args.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?
            .install(|| bench::run_bench(&cfg)),
        None => bench::run_bench(&cfg),
    };
    let mut m = Manifest::new("bench", argv, cfg.seeds.first().copied().unwrap_or(0));
    m.timings.insert("bench".into(), start.elapsed().as_secs_f64());
    m.inputs.insert("config".into(), absolute(&args.config));
    m.artifacts = bench::write_tables(&args.out, &cfg, &report)?;
    let failed = report.main.iter().chain(&report.sweep).filter(|(_, r)| r.is_err()).count();
    m.diagnostics.insert("failed_cells".into(), failed as f64);
    m.bench = Some(cfg);
    artifacts::write_manifest(&args.out.join(artifacts::MANIFEST_FILE), &m)
}
