use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::avocado::run_avocado;
use super::config::{Scenario, ScenarioConfig};
use super::linear::{run_linear_check, LinearCheckReport};
use super::nrho::run_nrho;
use super::{ScenarioOutcome, TrialRecord};
use crate::error::{Error, Result};
use crate::gaussian::GridField;
use crate::metrics::MetricsReport;

/// The machine-readable result of one invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: Scenario,
    pub seed: u64,
    pub records: Vec<MetricsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linear_check: Option<LinearCheckReport>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }
}

/// True when any record flags more than `limit` of its trials.
pub fn exceeds_flag_limit(records: &[MetricsReport], limit: f64) -> bool {
    records
        .iter()
        .any(|r| r.trials > 0 && r.flagged_trials as f64 / r.trials as f64 > limit)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// `trial, epoch, rmse, snees` rows.
pub fn write_trial_csv(path: &Path, rows: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["trial", "epoch", "rmse", "snees"]).map_err(csv_error)?;
    for r in rows {
        let snees = r.snees.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([r.trial.to_string(), r.epoch.to_string(), r.rmse.to_string(), snees])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// `x1, x2, density` rows, first axis outermost.
pub fn write_grid_csv(path: &Path, field: &GridField) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["x1", "x2", "density"]).map_err(csv_error)?;
    let (n0, n1) = field.shape();
    for i in 0..n0 {
        for j in 0..n1 {
            w.write_record([
                field.axes[0][i].to_string(),
                field.axes[1][j].to_string(),
                field.value(i, j).to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| match c {
            '*' => 's',
            c if c.is_ascii_alphanumeric() || c == '-' => c.to_ascii_lowercase(),
            _ => '_',
        })
        .collect::<String>()
        .trim_matches('_')
        .to_string()
}

/// Write the report and whichever optional dumps the config asks for.
pub fn write_outputs(cfg: &ScenarioConfig, report: &RunReport, outcome: Option<&ScenarioOutcome>) -> Result<()> {
    if let Some(path) = &cfg.output {
        fs::write(path, report.to_json()?)?;
    }
    let Some(outcome) = outcome else {
        return Ok(());
    };
    if let Some(path) = &cfg.trial_csv {
        write_trial_csv(path, &outcome.trials)?;
    }
    if let Some(dir) = &cfg.grid_dump {
        if !outcome.grids.is_empty() {
            fs::create_dir_all(dir)?;
            for (label, field) in &outcome.grids {
                write_grid_csv(&dir.join(format!("{}.csv", file_stem(label))), field)?;
            }
        }
    }
    Ok(())
}

/// Run the configured scenario once and write its outputs.
pub fn run(cfg: &ScenarioConfig) -> Result<RunReport> {
    let (report, outcome) = match cfg.scenario {
        Scenario::LinearCheck => {
            let check = run_linear_check(cfg)?;
            let report = RunReport {
                scenario: cfg.scenario,
                seed: cfg.seed,
                records: Vec::new(),
                linear_check: Some(check),
            };
            (report, None)
        }
        Scenario::Avocado | Scenario::Nrho => {
            let outcome = if cfg.scenario == Scenario::Avocado {
                run_avocado(cfg)?
            } else {
                run_nrho(cfg)?
            };
            let report = RunReport {
                scenario: cfg.scenario,
                seed: cfg.seed,
                records: vec![outcome.report.clone()],
                linear_check: None,
            };
            (report, Some(outcome))
        }
    };
    write_outputs(cfg, &report, outcome.as_ref())?;
    Ok(report)
}
