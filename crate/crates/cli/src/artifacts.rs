//! On-disk formats. Curve-valued outputs are comma-separated with the grid
//! as header row; chains, heat maps, truths and manifests are JSON wrapped
//! in a versioned envelope. Every write goes to a temporary file in the
//! target directory and is renamed into place.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use bliss_core::estimate::{HeatMap, SannConfig};
use bliss_core::simulate::{SimConfig, Truth};
use bliss_core::{Chain, DisjointStepFunction, GibbsConfig, Hyperparameters, IntervalSet, Piece, Span, TimeGrid};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bench::BenchConfig;
use crate::error::{CliError, Result};
use crate::ingest;

pub const SCHEMA_VERSION: u32 = 1;

pub const CHAIN_FILE: &str = "chain.json";
pub const ALPHA_FILE: &str = "alpha.csv";
pub const BETA_L2_FILE: &str = "beta_l2.csv";
pub const STEPWISE_FILE: &str = "stepwise.csv";
pub const STEPWISE_PIECES_FILE: &str = "stepwise_pieces.csv";
pub const HEATMAP_FILE: &str = "heatmap.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRUTH_FILE: &str = "truth.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const OUTCOMES_FILE: &str = "y.csv";

pub fn support_file_name(gamma: f64) -> String {
    format!("support_gamma_{gamma}.csv")
}

/// Writes `bytes` to `path` through a sibling temporary file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Config(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Versioned wrapper around every JSON artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema_version: u32,
    pub kind: String,
    pub data: T,
}

pub fn write_json<T: Serialize>(path: &Path, kind: &str, data: &T) -> Result<()> {
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        kind: kind.to_owned(),
        data,
    };
    let mut bytes = serde_json::to_vec_pretty(&env).map_err(|e| CliError::Data(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let env: Envelope<T> =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if env.schema_version != SCHEMA_VERSION {
        return Err(CliError::Data(format!(
            "{}: schema version {} is not supported (expected {SCHEMA_VERSION})",
            path.display(),
            env.schema_version
        )));
    }
    if env.kind != kind {
        return Err(CliError::Data(format!(
            "{}: holds a {} artifact, expected {kind}",
            path.display(),
            env.kind
        )));
    }
    Ok(env.data)
}

/// Chain artifact: the draws plus the grid they live on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainFile {
    pub rng_algorithm: String,
    pub grid: TimeGrid,
    pub chain: Chain,
}

pub fn write_chain(path: &Path, grid: &TimeGrid, chain: &Chain) -> Result<()> {
    let file = ChainFile {
        rng_algorithm: chain.rng_algorithm.clone(),
        grid: grid.clone(),
        chain: chain.clone(),
    };
    write_json(path, "chain", &file)
}

pub fn read_chain(path: &Path) -> Result<ChainFile> {
    read_json(path, "chain")
}

pub fn write_heatmap(path: &Path, map: &HeatMap) -> Result<()> {
    write_json(path, "heatmap", map)
}

pub fn read_heatmap(path: &Path) -> Result<HeatMap> {
    read_json(path, "heatmap")
}

pub fn write_truth(path: &Path, truth: &Truth) -> Result<()> {
    write_json(path, "truth", truth)
}

pub fn read_truth(path: &Path) -> Result<Truth> {
    read_json(path, "truth")
}

fn csv_bytes<F>(fill: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    fill(&mut w).map_err(|e| CliError::Data(e.to_string()))?;
    w.into_inner().map_err(|e| CliError::Data(e.to_string()))
}

fn fmt(v: f64) -> String {
    // Shortest representation that parses back to the same bits.
    format!("{v:?}")
}

/// Grid header followed by one row per curve.
pub fn write_curve_table(path: &Path, grid: &TimeGrid, rows: &[Vec<f64>]) -> Result<()> {
    if let Some(r) = rows.iter().find(|r| r.len() != grid.len()) {
        return Err(CliError::Data(format!(
            "row of {} values for a grid of {} points",
            r.len(),
            grid.len()
        )));
    }
    let bytes = csv_bytes(|w| {
        w.write_record(grid.points().iter().map(|&t| fmt(t)))?;
        for r in rows {
            w.write_record(r.iter().map(|&v| fmt(v)))?;
        }
        Ok(())
    })?;
    write_atomic(path, &bytes)
}

pub fn read_curve_table(path: &Path) -> Result<(TimeGrid, Vec<Vec<f64>>)> {
    ingest::read_curves(path)
}

pub fn write_outcomes(path: &Path, y: &[f64]) -> Result<()> {
    let mut s = String::new();
    for v in y {
        s.push_str(&fmt(*v));
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

/// One `start,end` row per interval.
pub fn write_support(path: &Path, set: &IntervalSet) -> Result<()> {
    let bytes = csv_bytes(|w| {
        w.write_record(["start", "end"])?;
        for s in set.spans() {
            w.write_record([fmt(s.start), fmt(s.end)])?;
        }
        Ok(())
    })?;
    write_atomic(path, &bytes)
}

/// One `start,end,value` row per piece.
pub fn write_pieces(path: &Path, f: &DisjointStepFunction) -> Result<()> {
    let bytes = csv_bytes(|w| {
        w.write_record(["start", "end", "value"])?;
        for p in f.piece_list() {
            w.write_record([fmt(p.span.start), fmt(p.span.end), fmt(p.value)])?;
        }
        Ok(())
    })?;
    write_atomic(path, &bytes)
}

/// Contents of an estimate file, as recognized from its header.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimateFile {
    Support(IntervalSet),
    Pieces(Vec<Piece>),
    Curve { grid: TimeGrid, values: Vec<f64> },
}

fn parse_row(path: &Path, line: usize, rec: &csv::StringRecord) -> Result<Vec<f64>> {
    rec.iter()
        .enumerate()
        .map(|(j, c)| {
            c.parse::<f64>().map_err(|_| {
                CliError::Data(format!(
                    "{}: row {line}, column {}: cannot parse {c:?} as a number",
                    path.display(),
                    j + 1
                ))
            })
        })
        .collect()
}

pub fn read_estimate(path: &Path) -> Result<EstimateFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let header: Vec<&str> = first.split(',').map(str::trim).collect();
    let labelled = header == ["start", "end"] || header == ["start", "end", "value"];
    if !labelled {
        let (grid, rows) = ingest::parse_curves(&text, &path.display().to_string())?;
        let values = match rows.as_slice() {
            [row] => row.clone(),
            _ => {
                return Err(CliError::Data(format!(
                    "{}: expected one curve row, found {}",
                    path.display(),
                    rows.len()
                )))
            }
        };
        return Ok(EstimateFile::Curve { grid, values });
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        rows.push(parse_row(path, line, &rec)?);
    }
    if header.len() == 2 {
        Ok(EstimateFile::Support(IntervalSet::from_spans(
            rows.iter().map(|r| Span::new(r[0], r[1])),
        )))
    } else {
        Ok(EstimateFile::Pieces(
            rows.iter()
                .map(|r| Piece {
                    span: Span::new(r[0], r[1]),
                    value: r[2],
                })
                .collect(),
        ))
    }
}

/// Record of a run: everything needed to repeat it, plus timings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub command: String,
    /// Command line as given.
    pub args: Vec<String>,
    pub seed: u64,
    #[serde(default)]
    pub inputs: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub dataset_fingerprint: Option<String>,
    #[serde(default)]
    pub hyperparameters: Option<Hyperparameters>,
    #[serde(default)]
    pub gibbs: Option<GibbsConfig>,
    #[serde(default)]
    pub sann: Option<SannConfig>,
    #[serde(default)]
    pub simulation: Option<SimConfig>,
    #[serde(default)]
    pub bench: Option<BenchConfig>,
    #[serde(default)]
    pub gammas: Vec<f64>,
    #[serde(default)]
    pub heatmap_bins: Option<usize>,
    #[serde(default)]
    pub artifacts: Vec<String>,
    /// Wall-clock seconds per stage.
    #[serde(default)]
    pub timings: BTreeMap<String, f64>,
    #[serde(default)]
    pub diagnostics: BTreeMap<String, f64>,
}

impl Manifest {
    pub fn new(command: &str, args: Vec<String>, seed: u64) -> Self {
        Manifest {
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            command: command.to_owned(),
            args,
            seed,
            inputs: BTreeMap::new(),
            dataset_fingerprint: None,
            hyperparameters: None,
            gibbs: None,
            sann: None,
            simulation: None,
            bench: None,
            gammas: Vec::new(),
            heatmap_bins: None,
            artifacts: Vec::new(),
            timings: BTreeMap::new(),
            diagnostics: BTreeMap::new(),
        }
    }
}

pub fn write_manifest(path: &Path, m: &Manifest) -> Result<()> {
    write_json(path, "manifest", m)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    read_json(path, "manifest")
}
