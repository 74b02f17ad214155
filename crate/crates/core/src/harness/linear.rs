//! Fuzzed check that every weight scheme reproduces the exact mixture weights
//! when the measurement is linear and the components share a covariance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use crate::engmf::stream_rng;
use crate::error::Result;
use crate::gaussian::{log_gaussian_pdf, normalize_log_weights, GaussianComponent, GaussianMixture};
use crate::models::LinearModel;
use crate::updaters::Updater;
use crate::weights::{gmm_measurement_update, TraditionalSigmaForm, WeightScheme};

/// One randomly drawn linear problem.
#[derive(Clone, Debug)]
pub struct LinearCase {
    pub model: LinearModel,
    pub mixture: GaussianMixture,
    pub measurement: DVector<f64>,
    pub bruf_steps: usize,
}

fn gaussian_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn random_spd(rng: &mut impl Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let a = gaussian_matrix(rng, n, n) * 0.5;
    &a * a.transpose() + DMatrix::identity(n, n) * floor
}

impl LinearCase {
    /// Case `index` of the fuzz stream. Dimensions cycle so that every
    /// `(n_x, n_y)` pair is visited.
    pub fn generate(cfg: &ScenarioConfig, index: usize) -> Result<Self> {
        let opts = &cfg.linear;
        let mut rng = stream_rng(cfg.seed, index as u64);
        let nx = 1 + index % opts.max_state_dim.max(1);
        let ny = 1 + (index / opts.max_state_dim.max(1)) % opts.max_measurement_dim.max(1);
        let k = rng.gen_range(1..=opts.max_components.max(1));
        let h = gaussian_matrix(&mut rng, ny, nx);
        let noise = random_spd(&mut rng, ny, 0.1);
        let cov = random_spd(&mut rng, nx, 0.1);
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let components = raw
            .iter()
            .map(|w| {
                let mean = DVector::from_fn(nx, |_, _| rng.sample::<f64, _>(StandardNormal));
                GaussianComponent::new(w / total, mean, cov.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        let measurement = DVector::from_fn(ny, |_, _| rng.sample::<f64, _>(StandardNormal));
        Ok(Self {
            model: LinearModel::new(h, noise)?,
            mixture: GaussianMixture::new(components)?,
            measurement,
            bruf_steps: rng.gen_range(1..=opts.max_bruf_steps.max(1)),
        })
    }

    /// Closed-form weights `wᵢ N(y; H mᵢ, H P H' + R)`, normalized.
    pub fn exact_weights(&self) -> Result<Vec<f64>> {
        let h = self.model.matrix();
        let logs = self
            .mixture
            .components()
            .iter()
            .map(|c| {
                let s = h * &c.covariance * h.transpose() + self.model_noise();
                Ok(c.weight.ln() + log_gaussian_pdf(&self.measurement, &(h * &c.mean), &s)?)
            })
            .collect::<Result<Vec<_>>>()?;
        normalize_log_weights(&logs)
    }

    fn model_noise(&self) -> DMatrix<f64> {
        use crate::updaters::MeasurementModel;
        self.model.noise_cov().clone()
    }

    pub fn updaters(&self) -> [Updater; 4] {
        [
            Updater::Ekf,
            Updater::Bruf { steps: self.bruf_steps },
            Updater::ukf(),
            Updater::ckf(),
        ]
    }
}

/// The schemes exercised by the check. The sigma-point traditional weight
/// uses the predicted-mean form, the only sigma form that is exact for linear
/// measurements.
pub const LINEAR_CHECK_SCHEMES: [WeightScheme; 4] = [
    WeightScheme::TraditionalDensity,
    WeightScheme::ImprovedDensity,
    WeightScheme::TraditionalSigma(TraditionalSigmaForm::PredictedMean),
    WeightScheme::ImprovedSigma,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDiscrepancy {
    pub updater: String,
    pub scheme: String,
    pub max_discrepancy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearCheckReport {
    pub cases: usize,
    pub tolerance: f64,
    pub max_discrepancy: f64,
    pub pairs: Vec<PairDiscrepancy>,
    pub passed: bool,
}

fn updater_name(u: &Updater) -> &'static str {
    match u {
        Updater::Ekf => "ekf",
        Updater::Bruf { .. } => "bruf",
        Updater::Sigma(p) if p.kappa == 0.0 && p.beta == 0.0 => "ckf",
        Updater::Sigma(_) => "ukf",
    }
}

fn scheme_name(s: &WeightScheme) -> &'static str {
    match s {
        WeightScheme::TraditionalDensity => "traditional",
        WeightScheme::ImprovedDensity => "improved",
        WeightScheme::TraditionalSigma(_) => "traditional-sigma",
        WeightScheme::ImprovedSigma => "improved-sigma",
    }
}

/// ∞-norm gap between each scheme's normalized weights and the closed form,
/// per `(updater, scheme)` pair in a fixed order.
pub fn case_discrepancies(case: &LinearCase) -> Result<Vec<f64>> {
    let exact = case.exact_weights()?;
    let mut out = Vec::with_capacity(16);
    for updater in case.updaters() {
        for scheme in LINEAR_CHECK_SCHEMES {
            let post = gmm_measurement_update(&case.mixture, &case.model, &case.measurement, updater, scheme)?;
            let gap = post
                .weights()
                .iter()
                .zip(&exact)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            out.push(gap);
        }
    }
    Ok(out)
}

pub fn run_linear_check(cfg: &ScenarioConfig) -> Result<LinearCheckReport> {
    use rayon::prelude::*;
    let cases = cfg.linear.cases;
    let per_case = (0..cases)
        .into_par_iter()
        .map(|i| case_discrepancies(&LinearCase::generate(cfg, i)?))
        .collect::<Result<Vec<_>>>()?;
    let probe = LinearCase::generate(cfg, 0)?;
    let mut pairs = Vec::new();
    for (ui, u) in probe.updaters().iter().enumerate() {
        for (si, s) in LINEAR_CHECK_SCHEMES.iter().enumerate() {
            let idx = ui * LINEAR_CHECK_SCHEMES.len() + si;
            let max = per_case.iter().map(|c| c[idx]).fold(0.0, f64::max);
            pairs.push(PairDiscrepancy {
                updater: updater_name(u).to_string(),
                scheme: scheme_name(s).to_string(),
                max_discrepancy: max,
            });
        }
    }
    let max_discrepancy = pairs.iter().map(|p| p.max_discrepancy).fold(0.0, f64::max);
    Ok(LinearCheckReport {
        cases,
        tolerance: cfg.linear.tolerance,
        max_discrepancy,
        pairs,
        passed: max_discrepancy < cfg.linear.tolerance,
    })
}
