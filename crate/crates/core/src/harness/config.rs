use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagation::IntegratorConfig;
use crate::updaters::{UnscentedParams, Updater};
use crate::weights::{TraditionalSigmaForm, WeightScheme};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    #[default]
    Avocado,
    Nrho,
    LinearCheck,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdaterKind {
    #[default]
    Ekf,
    Bruf,
    Ukf,
    Ckf,
}

impl UpdaterKind {
    pub fn name(&self) -> &'static str {
        match self {
            UpdaterKind::Ekf => "EKF",
            UpdaterKind::Bruf => "BRUF",
            UpdaterKind::Ukf => "UKF",
            UpdaterKind::Ckf => "CKF",
        }
    }

    pub fn is_sigma(&self) -> bool {
        matches!(self, UpdaterKind::Ukf | UpdaterKind::Ckf)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    #[default]
    Traditional,
    Improved,
    TraditionalSigma,
    ImprovedSigma,
}

impl SchemeKind {
    pub fn is_improved(&self) -> bool {
        matches!(self, SchemeKind::Improved | SchemeKind::ImprovedSigma)
    }
}

/// One filter configuration in a comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Method {
    pub updater: UpdaterKind,
    pub scheme: SchemeKind,
}

impl Method {
    pub const fn new(updater: UpdaterKind, scheme: SchemeKind) -> Self {
        Self { updater, scheme }
    }

    /// `GMF(EKF)` style label; improved schemes carry a trailing `*`.
    pub fn label(&self) -> String {
        let star = if self.scheme.is_improved() { "*" } else { "" };
        let sigma_on_linear = !self.updater.is_sigma()
            && matches!(self.scheme, SchemeKind::TraditionalSigma | SchemeKind::ImprovedSigma);
        let suffix = if sigma_on_linear { "-sigma" } else { "" };
        format!("GMF({}{star}){suffix}", self.updater.name())
    }

    /// The traditional / improved pair compared for an updater:
    /// density weights for linearized updaters, sigma-point weights otherwise.
    pub fn pair(updater: UpdaterKind) -> [Method; 2] {
        if updater.is_sigma() {
            [
                Method::new(updater, SchemeKind::TraditionalSigma),
                Method::new(updater, SchemeKind::ImprovedSigma),
            ]
        } else {
            [
                Method::new(updater, SchemeKind::Traditional),
                Method::new(updater, SchemeKind::Improved),
            ]
        }
    }
}

/// How the Avocado reference state for RMSE is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AvocadoTruth {
    /// Mean of the grid-evaluated true posterior, the same for every trial.
    #[default]
    PosteriorMean,
    /// A fresh draw from the prior in every trial.
    PriorSample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AvocadoOptions {
    pub grid_nodes: usize,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub truth: AvocadoTruth,
    /// Prefactor of the grid divergence score; `None` means `1 / grid_nodes`.
    pub kld_prefactor: Option<f64>,
    pub noise_std: f64,
}

impl Default for AvocadoOptions {
    fn default() -> Self {
        Self {
            grid_nodes: 201,
            x_range: (-6.0, 2.0),
            y_range: (-4.0, 4.0),
            truth: AvocadoTruth::default(),
            kld_prefactor: None,
            noise_std: 0.4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NrhoOptions {
    pub orbits: usize,
    pub tracklets_per_orbit: usize,
    pub tracklet_hours: f64,
    pub cadence_minutes: f64,
    /// Gap between tracklets as a fraction of the orbit period.
    pub gap_periods: f64,
    pub pre_propagation_periods: f64,
    /// Position RMSE, in length units, beyond which a trial is flagged.
    pub divergence_gate: f64,
    /// Simulate noiseless measurements (the filter still assumes the noise).
    pub noiseless: bool,
}

impl Default for NrhoOptions {
    fn default() -> Self {
        Self {
            orbits: 5,
            tracklets_per_orbit: 3,
            tracklet_hours: 2.5,
            cadence_minutes: 10.0,
            gap_periods: 0.25,
            pre_propagation_periods: 0.75,
            divergence_gate: 0.1,
            noiseless: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearCheckOptions {
    pub cases: usize,
    pub max_state_dim: usize,
    pub max_measurement_dim: usize,
    pub max_components: usize,
    pub max_bruf_steps: usize,
    pub tolerance: f64,
}

impl Default for LinearCheckOptions {
    fn default() -> Self {
        Self {
            cases: 500,
            max_state_dim: 6,
            max_measurement_dim: 3,
            max_components: 5,
            max_bruf_steps: 20,
            tolerance: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOptions {
    pub components: Vec<usize>,
    /// Empty means the traditional / improved pair of the configured updater.
    pub methods: Vec<Method>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            components: vec![10, 25, 50, 100, 200],
            methods: Vec::new(),
        }
    }
}

/// Everything a scenario run needs. Unset counts fall back to per-scenario
/// defaults (see [`ScenarioConfig::components`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub updater: UpdaterKind,
    pub scheme: SchemeKind,
    pub traditional_sigma_form: TraditionalSigmaForm,
    pub components: Option<usize>,
    pub monte_carlo: Option<usize>,
    pub bruf_steps: usize,
    pub ut_alpha: Option<f64>,
    pub ut_beta: Option<f64>,
    pub ut_kappa: Option<f64>,
    pub seed: u64,
    pub integrator: IntegratorConfig,
    /// Largest tolerated fraction of flagged trials before a run reports failure.
    pub max_flagged_fraction: f64,
    pub output: Option<PathBuf>,
    pub trial_csv: Option<PathBuf>,
    pub grid_dump: Option<PathBuf>,
    pub avocado: AvocadoOptions,
    pub nrho: NrhoOptions,
    pub linear: LinearCheckOptions,
    pub sweep: SweepOptions,
}

pub const DEFAULT_BRUF_STEPS: usize = 2;

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::default(),
            updater: UpdaterKind::default(),
            scheme: SchemeKind::default(),
            traditional_sigma_form: TraditionalSigmaForm::default(),
            components: None,
            monte_carlo: None,
            bruf_steps: DEFAULT_BRUF_STEPS,
            ut_alpha: None,
            ut_beta: None,
            ut_kappa: None,
            seed: 0,
            integrator: IntegratorConfig::default(),
            max_flagged_fraction: 0.1,
            output: None,
            trial_csv: None,
            grid_dump: None,
            avocado: AvocadoOptions::default(),
            nrho: NrhoOptions::default(),
            linear: LinearCheckOptions::default(),
            sweep: SweepOptions::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn with_method(&self, method: Method) -> Self {
        Self {
            updater: method.updater,
            scheme: method.scheme,
            ..self.clone()
        }
    }

    pub fn with_components(&self, m: usize) -> Self {
        Self {
            components: Some(m),
            ..self.clone()
        }
    }

    pub fn method(&self) -> Method {
        Method::new(self.updater, self.scheme)
    }

    pub fn components(&self) -> usize {
        self.components.unwrap_or(match self.scenario {
            Scenario::Avocado => 100,
            Scenario::Nrho => 25,
            Scenario::LinearCheck => self.linear.max_components,
        })
    }

    pub fn monte_carlo(&self) -> usize {
        self.monte_carlo.unwrap_or(match self.scenario {
            Scenario::Avocado => 100,
            Scenario::Nrho => 20,
            Scenario::LinearCheck => self.linear.cases,
        })
    }

    fn ut_override(&self, base: UnscentedParams) -> UnscentedParams {
        UnscentedParams::new(
            self.ut_alpha.unwrap_or(base.alpha),
            self.ut_beta.unwrap_or(base.beta),
            self.ut_kappa.unwrap_or(base.kappa),
        )
    }

    pub fn build_updater(&self) -> Updater {
        match self.updater {
            UpdaterKind::Ekf => Updater::Ekf,
            UpdaterKind::Bruf => Updater::Bruf {
                steps: self.bruf_steps,
            },
            UpdaterKind::Ukf => Updater::Sigma(self.ut_override(UnscentedParams::unscented())),
            UpdaterKind::Ckf => Updater::Sigma(self.ut_override(UnscentedParams::cubature())),
        }
    }

    pub fn build_scheme(&self) -> WeightScheme {
        match self.scheme {
            SchemeKind::Traditional => WeightScheme::TraditionalDensity,
            SchemeKind::Improved => WeightScheme::ImprovedDensity,
            SchemeKind::TraditionalSigma => WeightScheme::TraditionalSigma(self.traditional_sigma_form),
            SchemeKind::ImprovedSigma => WeightScheme::ImprovedSigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.components() == 0 {
            return Err(Error::InvalidConfig("components must be at least 1".into()));
        }
        if self.monte_carlo() == 0 {
            return Err(Error::InvalidConfig("monte_carlo must be at least 1".into()));
        }
        if self.updater == UpdaterKind::Bruf && self.bruf_steps == 0 {
            return Err(Error::InvalidConfig("bruf_steps must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.max_flagged_fraction) {
            return Err(Error::InvalidConfig("max_flagged_fraction must lie in [0, 1]".into()));
        }
        self.integrator.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut cfg = ScenarioConfig::new(Scenario::Nrho);
        cfg.components = Some(35);
        cfg.scheme = SchemeKind::ImprovedSigma;
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = ScenarioConfig::from_toml_str("scenario = \"nrho\"\n[nrho]\norbits = 2\n").unwrap();
        assert_eq!(cfg.nrho.orbits, 2);
        assert_eq!(cfg.nrho.tracklets_per_orbit, 3);
        assert_eq!(cfg.components(), 25);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ScenarioConfig::from_toml_str("componets = 3").is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(Method::new(UpdaterKind::Ekf, SchemeKind::Improved).label(), "GMF(EKF*)");
        assert_eq!(Method::pair(UpdaterKind::Ckf)[0].label(), "GMF(CKF)");
    }
}
