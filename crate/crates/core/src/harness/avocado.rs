//! Single-update Avocado experiment: a correlated Gaussian prior off the
//! origin, the quadratic measurement `(x₁², x₂²)` and `y = 0`.

use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use rayon::prelude::*;

use super::config::{AvocadoTruth, ScenarioConfig};
use super::{ScenarioOutcome, TrialRecord};
use crate::engmf::{derive_seed, sample_gaussian, silverman_bandwidth};
use crate::error::Result;
use crate::gaussian::{mixture_moments, mixture_pdf_on_grid, GaussianMixture, GridField};
use crate::metrics::{
    compensated_mean, kl_divergence_grid, kld_grid_scaled, rmse, snees, true_posterior_grid, MetricsReport,
};
use crate::models::Avocado;
use crate::weights::gmm_measurement_update;

pub fn avocado_prior_mean() -> DVector<f64> {
    dvector![-3.5, 0.0]
}

pub fn avocado_prior_covariance() -> DMatrix<f64> {
    dmatrix![1.0, -0.5; -0.5, 1.0]
}

/// The parts of the experiment shared by every trial and method.
#[derive(Clone, Debug)]
pub struct AvocadoProblem {
    pub model: Avocado,
    pub measurement: DVector<f64>,
    pub grid: GridField,
    pub truth_grid: GridField,
    /// Mean of the grid posterior.
    pub posterior_mean: DVector<f64>,
}

impl AvocadoProblem {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        let opts = &cfg.avocado;
        let model = Avocado::new(opts.noise_std);
        let measurement = dvector![0.0, 0.0];
        let grid = GridField::uniform(opts.x_range, opts.y_range, opts.grid_nodes)?;
        let prior = GaussianMixture::single(avocado_prior_mean(), avocado_prior_covariance())?;
        let truth_grid = true_posterior_grid(&prior, &model, &measurement, &grid)?;
        let posterior_mean = grid_mean(&truth_grid);
        Ok(Self {
            model,
            measurement,
            grid,
            truth_grid,
            posterior_mean,
        })
    }

    fn kld_prefactor(&self, cfg: &ScenarioConfig) -> f64 {
        cfg.avocado
            .kld_prefactor
            .unwrap_or(1.0 / self.grid.axes[0].len() as f64)
    }
}

/// First moment of a normalized grid density (trapezoid rule).
pub fn grid_mean(field: &GridField) -> DVector<f64> {
    let mut out = DVector::zeros(2);
    for d in 0..2 {
        let mut weighted = GridField::from_axes(field.axes.clone()).expect("axes already validated");
        let n1 = field.axes[1].len();
        for (k, v) in weighted.values.iter_mut().enumerate() {
            let coord = if d == 0 { field.axes[0][k / n1] } else { field.axes[1][k % n1] };
            *v = coord * field.values[k];
        }
        out[d] = weighted.trapezoid_mass() / field.trapezoid_mass();
    }
    out
}

/// Prior mixture of `m` components: means drawn from the prior, weights
/// uniform, shared covariance `β_S²(2, m) · P`. A single component is the
/// prior itself.
pub fn avocado_prior_mixture(m: usize, seed: u64) -> Result<GaussianMixture> {
    let mean = avocado_prior_mean();
    let cov = avocado_prior_covariance();
    if m == 1 {
        return GaussianMixture::single(mean, cov);
    }
    let means = sample_gaussian(&mean, &cov, m, seed)?.members;
    GaussianMixture::uniform(&means, &(cov * silverman_bandwidth(2, m)))
}

struct TrialResult {
    rmse: f64,
    kld: f64,
    kl: f64,
    snees: f64,
    density: GridField,
}

fn run_trial(problem: &AvocadoProblem, cfg: &ScenarioConfig, trial: usize) -> Result<TrialResult> {
    let seed = derive_seed(cfg.seed, trial as u64);
    let prior = avocado_prior_mixture(cfg.components(), derive_seed(seed, 1))?;
    let post = gmm_measurement_update(
        &prior,
        &problem.model,
        &problem.measurement,
        cfg.build_updater(),
        cfg.build_scheme(),
    )?;
    let (mean, cov) = mixture_moments(&post)?;
    let truth = match cfg.avocado.truth {
        AvocadoTruth::PosteriorMean => problem.posterior_mean.clone(),
        AvocadoTruth::PriorSample => {
            sample_gaussian(&avocado_prior_mean(), &avocado_prior_covariance(), 1, derive_seed(seed, 2))?.members
                [0]
            .clone()
        }
    };
    let density = mixture_pdf_on_grid(&post, &problem.grid)?;
    Ok(TrialResult {
        rmse: rmse(&truth, &mean)?,
        kld: kld_grid_scaled(&density, &problem.truth_grid, problem.kld_prefactor(cfg))?,
        kl: kl_divergence_grid(&density, &problem.truth_grid)?,
        snees: snees(&truth, &mean, &cov)?,
        density,
    })
}

pub fn run_avocado(cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    let problem = AvocadoProblem::new(cfg)?;
    run_avocado_with(&problem, cfg)
}

/// Run the Monte Carlo trials against a prepared problem.
pub fn run_avocado_with(problem: &AvocadoProblem, cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    cfg.validate()?;
    let trials = cfg.monte_carlo();
    let results: Vec<Result<TrialResult>> = (0..trials).into_par_iter().map(|t| run_trial(problem, cfg, t)).collect();

    let mut records = Vec::new();
    let mut mean_density = GridField::from_axes(problem.grid.axes.clone())?;
    let (mut r, mut k, mut kl, mut s) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut flagged = 0;
    for (trial, res) in results.into_iter().enumerate() {
        match res {
            Ok(t) => {
                records.push(TrialRecord {
                    trial,
                    epoch: 0,
                    rmse: t.rmse,
                    snees: Some(t.snees),
                });
                for (acc, v) in mean_density.values.iter_mut().zip(&t.density.values) {
                    *acc += v;
                }
                r.push(t.rmse);
                k.push(t.kld);
                kl.push(t.kl);
                s.push(t.snees);
            }
            Err(_) => flagged += 1,
        }
    }
    let used = r.len().max(1) as f64;
    mean_density.values.iter_mut().for_each(|v| *v /= used);

    let method = cfg.method();
    let report = MetricsReport {
        label: method.label(),
        components: cfg.components(),
        trials,
        flagged_trials: flagged,
        rmse: compensated_mean(&r).unwrap_or(f64::NAN),
        position_rmse: None,
        kld: compensated_mean(&k),
        kl_divergence: compensated_mean(&kl),
        snees: compensated_mean(&s),
    };
    Ok(ScenarioOutcome {
        report,
        trials: records,
        grids: vec![
            ("truth".to_string(), problem.truth_grid.clone()),
            (method.label(), mean_density),
        ],
    })
}
