//! Component weight schemes and the full mixture measurement update.
//!
//! Every scheme returns an *unnormalized log-weight* `ln w⁻ + ln p̃ᵢ(y)` where
//! `p̃ᵢ(y)` is one of the following approximations of the component's
//! measurement marginal:
//!
//! | scheme | `p̃ᵢ(y)` |
//! |---|---|
//! | [`WeightScheme::TraditionalDensity`] | `N(y; h(x̄ᵢ), P̄yy)` with `P̄yy = H̄ P̄ H̄ᵀ + R` |
//! | [`WeightScheme::ImprovedDensity`] | `N(y; h(x̂ᵢ), P̂yy)` linearized about the posterior |
//! | [`WeightScheme::TraditionalSigma`] | sigma points drawn about the prior |
//! | [`WeightScheme::ImprovedSigma`] | importance sampling with sigma points about the posterior |
//!
//! The posterior-linearized innovation covariance has three algebraically
//! equivalent forms (see [`PosteriorCovForm`]); the Joseph-like form is the
//! default since it is symmetric and PSD by construction and needs no inverse.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{
    cholesky, log_gaussian_from_residual, normalize_log_weights, symmetrize, FactoredGaussian,
    GaussianComponent, GaussianMixture,
};
use crate::updaters::{
    unscented_sigma_points, MeasurementModel, SigmaPointSet, UnscentedParams, UpdateArtifacts,
    Updater,
};

/// How the sigma-point traditional weight approximates `pᵢ(y)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraditionalSigmaForm {
    /// `N(y; Σ W_m h(χ̄ₗ), P̄yy)`.
    PredictedMean,
    /// `Σ W_m N(y; h(χ̄ₗ), P̄yy)`.
    #[default]
    SigmaMixture,
    /// `Σ W_m N(y; h(χ̄ₗ), R)`, the likelihood evaluated at each prior sigma point.
    SigmaLikelihood,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScheme {
    TraditionalDensity,
    ImprovedDensity,
    TraditionalSigma(TraditionalSigmaForm),
    ImprovedSigma,
}

impl WeightScheme {
    pub fn is_improved(&self) -> bool {
        matches!(self, WeightScheme::ImprovedDensity | WeightScheme::ImprovedSigma)
    }

    /// Unnormalized log-weight of one updated component.
    pub fn log_weight<M: MeasurementModel + ?Sized>(
        &self,
        prior_weight: f64,
        artifacts: &UpdateArtifacts,
        model: &M,
        y: &DVector<f64>,
        sigma_params: UnscentedParams,
    ) -> Result<f64> {
        match *self {
            WeightScheme::TraditionalDensity => log_weight_traditional(prior_weight, artifacts, model, y),
            WeightScheme::ImprovedDensity => log_weight_improved(prior_weight, artifacts, model, y),
            WeightScheme::TraditionalSigma(form) => {
                log_weight_traditional_sigma(prior_weight, artifacts, model, y, form, sigma_params)
            }
            WeightScheme::ImprovedSigma => {
                log_weight_improved_sigma(prior_weight, artifacts, model, y, sigma_params)
            }
        }
    }
}

/// Algebraic form used for the posterior-linearized innovation covariance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PosteriorCovForm {
    /// `Ĥ P̂ Ĥᵀ + R - Ĥ K R - (Ĥ K R)ᵀ`. Symmetric, not necessarily PSD.
    Direct,
    /// `(Ĥ - H̄) P̂ (Ĥ - H̄)ᵀ + R P̄yy⁻¹ Rᵀ`. Needs `P̄yy` inverted.
    NoiseInverse,
    /// `(Ĥ - H̄) P̂ (Ĥ - H̄)ᵀ + (I - H̄K) P̄yy (I - H̄K)ᵀ`.
    #[default]
    Joseph,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorInnovationCov {
    pub value: DMatrix<f64>,
    pub form_used: PosteriorCovForm,
}

/// `H̄ P̄ H̄ᵀ + R`, symmetrized.
pub fn innovation_cov_prior(
    jacobian: &DMatrix<f64>,
    cov: &DMatrix<f64>,
    noise: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if jacobian.ncols() != cov.nrows() || noise.nrows() != jacobian.nrows() {
        return Err(Error::dims("innovation covariance operands disagree"));
    }
    Ok(symmetrize(&(jacobian * cov * jacobian.transpose() + noise)))
}

/// Posterior-linearized innovation covariance `P̂yy` in the requested form.
#[allow(clippy::too_many_arguments)]
pub fn innovation_cov_posterior(
    post_jacobian: &DMatrix<f64>,
    prior_jacobian: &DMatrix<f64>,
    post_cov: &DMatrix<f64>,
    prior_innovation_cov: &DMatrix<f64>,
    gain: &DMatrix<f64>,
    noise: &DMatrix<f64>,
    form: PosteriorCovForm,
) -> Result<PosteriorInnovationCov> {
    let ny = noise.nrows();
    if post_jacobian.shape() != prior_jacobian.shape()
        || post_jacobian.nrows() != ny
        || post_jacobian.ncols() != post_cov.nrows()
        || gain.shape() != (post_cov.nrows(), ny)
        || prior_innovation_cov.shape() != (ny, ny)
    {
        return Err(Error::dims("posterior innovation covariance operands disagree"));
    }
    let value = match form {
        PosteriorCovForm::Direct => {
            let hkr = post_jacobian * gain * noise;
            post_jacobian * post_cov * post_jacobian.transpose() + noise - &hkr - hkr.transpose()
        }
        PosteriorCovForm::NoiseInverse => {
            let dh = post_jacobian - prior_jacobian;
            let chol = cholesky(prior_innovation_cov)?;
            let inv_rt = chol.solve(&noise.transpose());
            &dh * post_cov * dh.transpose() + noise * inv_rt
        }
        PosteriorCovForm::Joseph => {
            let dh = post_jacobian - prior_jacobian;
            let resid = DMatrix::identity(ny, ny) - prior_jacobian * gain;
            &dh * post_cov * dh.transpose() + &resid * prior_innovation_cov * resid.transpose()
        }
    };
    Ok(PosteriorInnovationCov {
        value: symmetrize(&value),
        form_used: form,
    })
}

fn ln_prior_weight(w: f64) -> f64 {
    w.ln()
}

fn ln_density_of_residual(residual: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    if residual.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let chol = cholesky(cov)?;
    Ok(log_gaussian_from_residual(residual, &chol))
}

/// `ln w⁻ + ln N(y; ȳ, P̄yy)` using the prior prediction recorded by the updater.
pub fn log_weight_traditional<M: MeasurementModel + ?Sized>(
    prior_weight: f64,
    artifacts: &UpdateArtifacts,
    model: &M,
    y: &DVector<f64>,
) -> Result<f64> {
    let r = model.residual(y, &artifacts.predicted_measurement);
    Ok(ln_prior_weight(prior_weight) + ln_density_of_residual(&r, &artifacts.prior_innovation_cov)?)
}

/// `ln w⁻ + ln N(y; h(x̂), P̂yy)` with `P̂yy` in the Joseph-like form.
pub fn log_weight_improved<M: MeasurementModel + ?Sized>(
    prior_weight: f64,
    artifacts: &UpdateArtifacts,
    model: &M,
    y: &DVector<f64>,
) -> Result<f64> {
    log_weight_improved_with_form(prior_weight, artifacts, model, y, PosteriorCovForm::Joseph)
}

pub fn log_weight_improved_with_form<M: MeasurementModel + ?Sized>(
    prior_weight: f64,
    artifacts: &UpdateArtifacts,
    model: &M,
    y: &DVector<f64>,
    form: PosteriorCovForm,
) -> Result<f64> {
    let post = &artifacts.posterior;
    let prior_jacobian = match &artifacts.prior_jacobian {
        Some(j) => j.clone(),
        None => model.jacobian(&artifacts.prior_component.mean)?,
    };
    let post_jacobian = model.jacobian(&post.mean)?;
    let pyy = innovation_cov_posterior(
        &post_jacobian,
        &prior_jacobian,
        &post.covariance,
        &artifacts.prior_innovation_cov,
        &artifacts.gain,
        model.noise_cov(),
        form,
    )?;
    let r = model.residual(y, &model.predict(&post.mean)?);
    Ok(ln_prior_weight(prior_weight) + ln_density_of_residual(&r, &pyy.value)?)
}

/// `ln Σ wₗ exp(vₗ)` for non-negative weights. Zero-weight terms are skipped.
pub(crate) fn weighted_log_sum_exp(weights: &[f64], log_terms: &[f64]) -> Result<f64> {
    let mut max = f64::NEG_INFINITY;
    for (w, v) in weights.iter().zip(log_terms) {
        if *w < 0.0 && *v > f64::NEG_INFINITY {
            return Err(Error::NegativeUtWeight);
        }
        if *w > 0.0 && *v > max {
            max = *v;
        }
    }
    if !max.is_finite() {
        return Ok(max);
    }
    let sum: f64 = weights
        .iter()
        .zip(log_terms)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, v)| w * (v - max).exp())
        .sum();
    Ok(max + sum.ln())
}

fn prior_sigma_points(artifacts: &UpdateArtifacts, fallback: UnscentedParams) -> Result<SigmaPointSet> {
    match &artifacts.prior_sigma {
        Some(s) => Ok(s.clone()),
        None => {
            let c = &artifacts.prior_component;
            unscented_sigma_points(&c.mean, &c.covariance, fallback)
        }
    }
}

/// Sigma-point traditional weight: sigma points about the prior component.
///
/// When the updater did not produce sigma points they are generated from the
/// prior with `params`.
pub fn log_weight_traditional_sigma<M: MeasurementModel + ?Sized>(
    prior_weight: f64,
    artifacts: &UpdateArtifacts,
    model: &M,
    y: &DVector<f64>,
    form: TraditionalSigmaForm,
    params: UnscentedParams,
) -> Result<f64> {
    let sigma = prior_sigma_points(artifacts, params)?;
    let images = sigma
        .points
        .iter()
        .map(|p| model.predict(p))
        .collect::<Result<Vec<_>>>()?;
    let lw = ln_prior_weight(prior_weight);
    let ln_marginal = match form {
        TraditionalSigmaForm::PredictedMean => {
            let y_mean = crate::updaters::unscented_measurement_mean(model, &images, &sigma.mean_weights);
            ln_density_of_residual(&model.residual(y, &y_mean), &artifacts.prior_innovation_cov)?
        }
        TraditionalSigmaForm::SigmaMixture | TraditionalSigmaForm::SigmaLikelihood => {
            let cov = if form == TraditionalSigmaForm::SigmaMixture {
                &artifacts.prior_innovation_cov
            } else {
                model.noise_cov()
            };
            let chol = cholesky(cov)?;
            let terms: Vec<f64> = images
                .iter()
                .map(|img| log_gaussian_from_residual(&model.residual(y, img), &chol))
                .collect();
            weighted_log_sum_exp(&sigma.mean_weights, &terms)?
        }
    };
    Ok(lw + ln_marginal)
}

/// Importance-sampled improved weight: sigma points `χ̂` about the posterior,
/// each contributing `N(χ̂; x̄, P̄) N(y; h(χ̂), R) / N(χ̂; x̂, P̂)`.
pub fn log_weight_improved_sigma<M: MeasurementModel + ?Sized>(
    prior_weight: f64,
    artifacts: &UpdateArtifacts,
    model: &M,
    y: &DVector<f64>,
    fallback: UnscentedParams,
) -> Result<f64> {
    let params = artifacts.sigma_params.unwrap_or(fallback);
    let post = &artifacts.posterior;
    let prior = &artifacts.prior_component;
    let sigma = unscented_sigma_points(&post.mean, &post.covariance, params)?;
    let prior_density = FactoredGaussian::new(&prior.mean, &prior.covariance)?;
    let proposal = FactoredGaussian::new(&post.mean, &post.covariance)?;
    let noise = cholesky(model.noise_cov())?;
    let terms = sigma
        .points
        .iter()
        .map(|p| {
            let lik = log_gaussian_from_residual(&model.residual(y, &model.predict(p)?), &noise);
            Ok(prior_density.ln_pdf(p) + lik - proposal.ln_pdf(p))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ln_prior_weight(prior_weight) + weighted_log_sum_exp(&sigma.mean_weights, &terms)?)
}

/// Posterior mixture together with the per-component details of the update.
#[derive(Clone, Debug)]
pub struct MixtureUpdate {
    pub mixture: GaussianMixture,
    pub log_weights: Vec<f64>,
    pub artifacts: Vec<UpdateArtifacts>,
}

/// Update every component with `updater`, weight with `scheme`, normalize.
pub fn gmm_measurement_update<M: MeasurementModel + ?Sized>(
    mix: &GaussianMixture,
    model: &M,
    y: &DVector<f64>,
    updater: Updater,
    scheme: WeightScheme,
) -> Result<GaussianMixture> {
    Ok(gmm_measurement_update_detailed(mix, model, y, updater, scheme)?.mixture)
}

pub fn gmm_measurement_update_detailed<M: MeasurementModel + ?Sized>(
    mix: &GaussianMixture,
    model: &M,
    y: &DVector<f64>,
    updater: Updater,
    scheme: WeightScheme,
) -> Result<MixtureUpdate> {
    let sigma_params = updater.sigma_params();
    let per_component = mix
        .components()
        .par_iter()
        .map(|c| {
            let a = updater.update(c, model, y)?;
            let lw = scheme.log_weight(c.weight, &a, model, y, sigma_params)?;
            Ok((a, lw))
        })
        .collect::<Result<Vec<_>>>()?;
    let log_weights: Vec<f64> = per_component.iter().map(|(_, lw)| *lw).collect();
    let weights = normalize_log_weights(&log_weights)?;
    let components = per_component
        .iter()
        .zip(&weights)
        .map(|((a, _), w)| GaussianComponent {
            weight: *w,
            mean: a.posterior.mean.clone(),
            covariance: a.posterior.covariance.clone(),
        })
        .collect();
    Ok(MixtureUpdate {
        mixture: GaussianMixture::new(components)?,
        log_weights,
        artifacts: per_component.into_iter().map(|(a, _)| a).collect(),
    })
}
