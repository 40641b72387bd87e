//! Bayesian functional linear regression with sparse step-function
//! coefficients.
//!
//! A scalar outcome is regressed on a curve through
//! `y = μ + ∫ β(t) x(t) dt + ε`, where `β` is a sum of `K` normalized
//! interval indicators. The crate provides the prior and likelihood
//! ([`model`]), a Gibbs sampler ([`gibbs`]), posterior summaries including
//! the Bayes support estimate and a stepwise estimate ([`estimate`]), and a
//! generator for synthetic benchmark data ([`simulate`]).

pub mod dataset;
pub mod error;
pub mod estimate;
pub mod gibbs;
pub mod grid;
pub mod intervals;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod simulate;
pub mod step;

pub use dataset::FunctionalDataset;
pub use error::{BlissError, Result};
pub use gibbs::{run_gibbs, run_gibbs_from, Chain, GibbsConfig};
pub use grid::{Span, TimeGrid};
pub use intervals::IntervalSet;
pub use model::{default_hyperparameters, Hyperparameters, ParamState};
pub use step::{DisjointStepFunction, Piece, PiecewiseConstant, StepFunction};
