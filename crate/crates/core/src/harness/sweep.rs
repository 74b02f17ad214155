use super::avocado::{run_avocado_with, AvocadoProblem};
use super::config::{Method, Scenario, ScenarioConfig};
use super::nrho::run_nrho;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;

/// Methods compared by a sweep: the configured list, or the traditional /
/// improved pair of the configured updater.
pub fn sweep_methods(cfg: &ScenarioConfig) -> Vec<Method> {
    if cfg.sweep.methods.is_empty() {
        Method::pair(cfg.updater).to_vec()
    } else {
        cfg.sweep.methods.clone()
    }
}

/// One report per `(M, method)`, ordered by increasing `M` then method.
pub fn run_sweep(cfg: &ScenarioConfig) -> Result<Vec<MetricsReport>> {
    let mut counts = cfg.sweep.components.clone();
    counts.sort_unstable();
    counts.dedup();
    if counts.is_empty() || counts[0] == 0 {
        return Err(Error::InvalidConfig("sweep needs positive component counts".into()));
    }
    let methods = sweep_methods(cfg);
    let problem = match cfg.scenario {
        Scenario::Avocado => Some(AvocadoProblem::new(cfg)?),
        Scenario::Nrho => None,
        Scenario::LinearCheck => {
            return Err(Error::InvalidConfig("the linear check has no component sweep".into()))
        }
    };
    let mut rows = Vec::with_capacity(counts.len() * methods.len());
    for m in counts {
        for method in &methods {
            let run_cfg = cfg.with_components(m).with_method(*method);
            let outcome = match &problem {
                Some(p) => run_avocado_with(p, &run_cfg)?,
                None => run_nrho(&run_cfg)?,
            };
            rows.push(outcome.report);
        }
    }
    Ok(rows)
}
