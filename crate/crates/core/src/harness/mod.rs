//! Scenario definitions, Monte Carlo runners and result files.
//!
//! Trials run in parallel, each with a seed derived from the configured seed
//! and the trial index, so results do not depend on scheduling. Aggregates
//! are compensated means taken in trial order.

mod avocado;
mod config;
mod linear;
mod nrho;
mod output;
mod sweep;

pub use avocado::{
    avocado_prior_covariance, avocado_prior_mean, avocado_prior_mixture, grid_mean, run_avocado,
    run_avocado_with, AvocadoProblem,
};
pub use config::{
    AvocadoOptions, AvocadoTruth, LinearCheckOptions, Method, NrhoOptions, Scenario, ScenarioConfig, SchemeKind,
    SweepOptions, UpdaterKind, DEFAULT_BRUF_STEPS,
};
pub use linear::{case_discrepancies, run_linear_check, LinearCase, LinearCheckReport, PairDiscrepancy, LINEAR_CHECK_SCHEMES};
pub use nrho::{
    nrho_initial_covariance, nrho_initial_state, run_nrho, TrackletSchedule, NRHO_INITIAL_STATE, NRHO_PERIOD,
    NRHO_POSITION_STD, NRHO_VELOCITY_STD,
};
pub use output::{exceeds_flag_limit, run, write_grid_csv, write_outputs, write_trial_csv, RunReport};
pub use sweep::{run_sweep, sweep_methods};

use serde::{Deserialize, Serialize};

use crate::gaussian::GridField;
use crate::metrics::MetricsReport;

/// One row of the per-trial CSV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub epoch: usize,
    pub rmse: f64,
    pub snees: Option<f64>,
}

/// Aggregate report plus the per-trial rows and any grid fields worth dumping.
#[derive(Clone, Debug)]
pub struct ScenarioOutcome {
    pub report: MetricsReport,
    pub trials: Vec<TrialRecord>,
    pub grids: Vec<(String, GridField)>,
}
