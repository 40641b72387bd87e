//! Chain-to-summary pipeline shared by `fit`, `summarize` and `bench`.

use std::path::Path;

use bliss_core::estimate::{
    beta_l2, heatmap, posterior_alpha, stepwise_estimate, AlphaCurve, HeatMap, SannConfig, SannOutcome,
    SupportEstimate,
};
use bliss_core::{Chain, TimeGrid};

use crate::artifacts::{self, Manifest};
use crate::error::Result;

/// Posterior summaries of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub alpha: AlphaCurve,
    pub supports: Vec<SupportEstimate>,
    pub beta_l2: Vec<f64>,
    pub stepwise: SannOutcome,
    pub heatmap: HeatMap,
}

pub fn summarize(chain: &Chain, grid: &TimeGrid, sann: &SannConfig, gammas: &[f64], bins: usize) -> Result<Summary> {
    let alpha = posterior_alpha(chain, grid)?;
    let supports = gammas
        .iter()
        .map(|&g| bliss_core::estimate::support_estimate(&alpha, g))
        .collect::<bliss_core::Result<Vec<_>>>()?;
    let l2 = beta_l2(chain, grid)?;
    let stepwise = stepwise_estimate(&l2, grid, sann)?;
    let heatmap = heatmap(chain, grid, bins, None)?;
    Ok(Summary {
        alpha,
        supports,
        beta_l2: l2,
        stepwise,
        heatmap,
    })
}

/// SANN settings derived from the chain: `K0`, `ε` from its
/// hyperparameters and the chain seed.
pub fn sann_config_for(chain: &Chain, iterations: usize) -> SannConfig {
    let hp = &chain.hyperparameters;
    let mut cfg = SannConfig::new(hp.k0, hp.epsilon, chain.config.seed);
    cfg.iterations = iterations;
    cfg
}

/// Writes every summary artifact into `dir` and returns the file names.
pub fn write_summary(dir: &Path, grid: &TimeGrid, summary: &Summary) -> Result<Vec<String>> {
    let mut names = Vec::new();
    let mut put = |name: String| {
        let path = dir.join(&name);
        names.push(name);
        path
    };
    artifacts::write_curve_table(&put(artifacts::ALPHA_FILE.into()), grid, &[summary.alpha.values().to_vec()])?;
    for s in &summary.supports {
        artifacts::write_support(&put(artifacts::support_file_name(s.gamma)), &s.intervals)?;
    }
    artifacts::write_curve_table(&put(artifacts::BETA_L2_FILE.into()), grid, &[summary.beta_l2.clone()])?;
    let step = bliss_core::PiecewiseConstant::eval_on(&summary.stepwise.estimate, grid);
    artifacts::write_curve_table(&put(artifacts::STEPWISE_FILE.into()), grid, &[step])?;
    artifacts::write_pieces(&put(artifacts::STEPWISE_PIECES_FILE.into()), &summary.stepwise.estimate)?;
    artifacts::write_heatmap(&put(artifacts::HEATMAP_FILE.into()), &summary.heatmap)?;
    Ok(names)
}

/// Records annealing diagnostics in the manifest.
pub fn record_diagnostics(manifest: &mut Manifest, chain: &Chain, summary: &Summary) {
    let d = &mut manifest.diagnostics;
    d.insert("retained_draws".into(), chain.states.len() as f64);
    d.insert("underflow_events".into(), chain.underflow_events as f64);
    d.insert("sann_cost".into(), summary.stepwise.cost);
    d.insert("sann_initial_cost".into(), summary.stepwise.initial_cost);
    d.insert("sann_temperature".into(), summary.stepwise.temperature);
    d.insert("sann_acceptance_rate".into(), summary.stepwise.acceptance_rate);
}
