//! Stochastic integration of the chain, ensembles and the estimators used
//! on their output.

mod ensemble;
mod integrator;
pub mod stats;

pub use ensemble::{run_ensemble, summarize, EnsembleConfig, EnsembleResult, SummaryRow};
pub use integrator::{step, IntegratorConfig, Scheme};
