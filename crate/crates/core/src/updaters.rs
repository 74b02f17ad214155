//! Per-component measurement updates.
//!
//! Each updater maps a prior component and a measurement to an
//! [`UpdateArtifacts`] record: the posterior moments plus the byproducts
//! (gain, prior Jacobian, prior innovation covariance, sigma points) that the
//! weight schemes in [`crate::weights`] consume without redoing the update.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{cholesky, sqrt_lower, symmetrize, GaussianComponent};

/// A measurement `y = h(x) + η` with `η ~ N(0, R)`.
pub trait MeasurementModel: Sync {
    fn state_dim(&self) -> usize;
    fn measurement_dim(&self) -> usize;
    /// Noise-free measurement `h(x)`.
    fn predict(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    /// Analytic Jacobian `∂h/∂x` at `x`.
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;
    fn noise_cov(&self) -> &DMatrix<f64>;
    /// Innovation `y - y_pred`. Angular models override this to wrap.
    fn residual(&self, y: &DVector<f64>, y_pred: &DVector<f64>) -> DVector<f64> {
        y - y_pred
    }
}

/// Central-difference Jacobian of `h`, with per-coordinate step
/// `rel_step * (1 + |x_i|)`. Used to validate analytic Jacobians.
pub fn finite_difference_jacobian<M: MeasurementModel + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    rel_step: f64,
) -> Result<DMatrix<f64>> {
    let mut jac = DMatrix::zeros(model.measurement_dim(), x.len());
    for j in 0..x.len() {
        let step = rel_step * (1.0 + x[j].abs());
        let mut hi = x.clone();
        hi[j] += step;
        let mut lo = x.clone();
        lo[j] -= step;
        let d = model.residual(&model.predict(&hi)?, &model.predict(&lo)?) / (2.0 * step);
        jac.set_column(j, &d);
    }
    Ok(jac)
}

/// Three-parameter unscented transform scaling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnscentedParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl UnscentedParams {
    pub const fn new(alpha: f64, beta: f64, kappa: f64) -> Self {
        Self { alpha, beta, kappa }
    }

    /// α = 1, β = 2, κ = 3.
    pub const fn unscented() -> Self {
        Self::new(1.0, 2.0, 3.0)
    }

    /// The cubature rule expressed as an unscented transform: α = 1, β = 0, κ = 0.
    pub const fn cubature() -> Self {
        Self::new(1.0, 0.0, 0.0)
    }

    /// `λ = α²(n + κ) - n`.
    pub fn lambda(&self, n: usize) -> f64 {
        let n = n as f64;
        self.alpha * self.alpha * (n + self.kappa) - n
    }
}

/// `2n + 1` sigma points with their mean and covariance weights.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaPointSet {
    pub points: Vec<DVector<f64>>,
    pub mean_weights: Vec<f64>,
    pub cov_weights: Vec<f64>,
}

impl SigmaPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn weighted_mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.points[0].len());
        for (p, w) in self.points.iter().zip(&self.mean_weights) {
            m.axpy(*w, p, 1.0);
        }
        m
    }

    /// `Σ W_c (χ - μ)(χ - μ)ᵀ` about the given centre.
    pub fn weighted_spread(&self, centre: &DVector<f64>) -> DMatrix<f64> {
        let n = centre.len();
        let mut p = DMatrix::zeros(n, n);
        for (pt, w) in self.points.iter().zip(&self.cov_weights) {
            let d = pt - centre;
            p += &d * d.transpose() * *w;
        }
        p
    }
}

/// Sigma points about `mean` built from the lower-triangular square root of `cov`.
pub fn unscented_sigma_points(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    params: UnscentedParams,
) -> Result<SigmaPointSet> {
    let n = mean.len();
    let lambda = params.lambda(n);
    let spread = n as f64 + lambda;
    if !(spread > 0.0) || !spread.is_finite() {
        return Err(Error::InvalidUnscentedScaling);
    }
    if cov.nrows() != n || cov.ncols() != n {
        return Err(Error::dims("sigma-point covariance does not match mean"));
    }
    let root = sqrt_lower(cov)? * spread.sqrt();

    let mut points = Vec::with_capacity(2 * n + 1);
    points.push(mean.clone());
    for i in 0..n {
        points.push(mean + root.column(i));
    }
    for i in 0..n {
        points.push(mean - root.column(i));
    }

    let w0 = lambda / spread;
    let wi = 1.0 / (2.0 * spread);
    let mut mean_weights = vec![wi; 2 * n + 1];
    mean_weights[0] = w0;
    let mut cov_weights = mean_weights.clone();
    cov_weights[0] = w0 + (1.0 - params.alpha * params.alpha + params.beta);

    Ok(SigmaPointSet {
        points,
        mean_weights,
        cov_weights,
    })
}

/// Everything a component update produces that weight schemes may need.
#[derive(Clone, Debug)]
pub struct UpdateArtifacts {
    /// Posterior moments. The weight field is a placeholder until a scheme sets it.
    pub posterior: GaussianComponent,
    pub gain: DMatrix<f64>,
    pub prior_jacobian: Option<DMatrix<f64>>,
    pub prior_innovation_cov: DMatrix<f64>,
    /// `h(x̄)` for linearized updaters; the unscented predicted mean for sigma updaters.
    pub predicted_measurement: DVector<f64>,
    pub prior_sigma: Option<SigmaPointSet>,
    pub sigma_params: Option<UnscentedParams>,
    pub prior_component: GaussianComponent,
}

fn check_dims<M: MeasurementModel + ?Sized>(
    comp: &GaussianComponent,
    model: &M,
    y: &DVector<f64>,
) -> Result<()> {
    if comp.dim() != model.state_dim() {
        return Err(Error::dims(format!(
            "component has dimension {}, model expects {}",
            comp.dim(),
            model.state_dim()
        )));
    }
    if y.len() != model.measurement_dim() {
        return Err(Error::dims(format!(
            "measurement has {} entries, model expects {}",
            y.len(),
            model.measurement_dim()
        )));
    }
    Ok(())
}

/// `cross · innov⁻¹` through a factorization of `innov`.
fn gain(cross: &DMatrix<f64>, innov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = cholesky(innov)?;
    Ok(chol.solve(&cross.transpose()).transpose())
}

struct Linearized {
    jacobian: DMatrix<f64>,
    innovation_cov: DMatrix<f64>,
    gain: DMatrix<f64>,
}

fn linearize<M: MeasurementModel + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    p: &DMatrix<f64>,
    noise: &DMatrix<f64>,
) -> Result<Linearized> {
    let jacobian = model.jacobian(x)?;
    let pht = p * jacobian.transpose();
    let innovation_cov = symmetrize(&(&jacobian * &pht + noise));
    let gain = gain(&pht, &innovation_cov)?;
    Ok(Linearized {
        jacobian,
        innovation_cov,
        gain,
    })
}

/// Extended Kalman filter update of one component.
pub fn ekf_update<M: MeasurementModel + ?Sized>(
    comp: &GaussianComponent,
    model: &M,
    y: &DVector<f64>,
) -> Result<UpdateArtifacts> {
    check_dims(comp, model, y)?;
    let x = &comp.mean;
    let p = &comp.covariance;
    let lin = linearize(model, x, p, model.noise_cov())?;
    let y_pred = model.predict(x)?;
    let mean = x + &lin.gain * model.residual(y, &y_pred);
    let cov = symmetrize(&(p - &lin.gain * &lin.jacobian * p));
    Ok(UpdateArtifacts {
        posterior: GaussianComponent::new(comp.weight, mean, cov)?,
        gain: lin.gain,
        prior_jacobian: Some(lin.jacobian),
        prior_innovation_cov: lin.innovation_cov,
        predicted_measurement: y_pred,
        prior_sigma: None,
        sigma_params: None,
        prior_component: comp.clone(),
    })
}

/// Bayesian recursive update: `steps` relinearized partial updates with
/// noise `steps · R`. The recorded gain, Jacobian and innovation covariance
/// are those of the original prior.
pub fn bruf_update<M: MeasurementModel + ?Sized>(
    comp: &GaussianComponent,
    model: &M,
    y: &DVector<f64>,
    steps: usize,
) -> Result<UpdateArtifacts> {
    check_dims(comp, model, y)?;
    if steps == 0 {
        return Err(Error::InvalidConfig("BRUF needs at least one step".into()));
    }
    let inflated = model.noise_cov() * steps as f64;
    let mut x = comp.mean.clone();
    let mut p = comp.covariance.clone();
    for _ in 0..steps {
        let lin = linearize(model, &x, &p, &inflated)?;
        let innov = model.residual(y, &model.predict(&x)?);
        x += &lin.gain * innov;
        p = symmetrize(&(&p - &lin.gain * &lin.jacobian * &p));
    }
    let prior = linearize(model, &comp.mean, &comp.covariance, model.noise_cov())?;
    Ok(UpdateArtifacts {
        posterior: GaussianComponent::new(comp.weight, x, p)?,
        gain: prior.gain,
        prior_jacobian: Some(prior.jacobian),
        prior_innovation_cov: prior.innovation_cov,
        predicted_measurement: model.predict(&comp.mean)?,
        prior_sigma: None,
        sigma_params: None,
        prior_component: comp.clone(),
    })
}

/// Predicted measurement mean of a sigma-point set, accumulated as residuals
/// about the central point so that angular wrapping stays consistent.
pub(crate) fn unscented_measurement_mean<M: MeasurementModel + ?Sized>(
    model: &M,
    images: &[DVector<f64>],
    weights: &[f64],
) -> DVector<f64> {
    let anchor = &images[0];
    let mut offset = DVector::zeros(anchor.len());
    for (img, w) in images.iter().zip(weights) {
        offset.axpy(*w, &model.residual(img, anchor), 1.0);
    }
    anchor + offset
}

/// Unscented (sigma-point) update of one component.
pub fn sigma_update<M: MeasurementModel + ?Sized>(
    comp: &GaussianComponent,
    model: &M,
    y: &DVector<f64>,
    params: UnscentedParams,
) -> Result<UpdateArtifacts> {
    check_dims(comp, model, y)?;
    let x = &comp.mean;
    let p = &comp.covariance;
    let sigma = unscented_sigma_points(x, p, params)?;
    let images = sigma
        .points
        .iter()
        .map(|pt| model.predict(pt))
        .collect::<Result<Vec<_>>>()?;
    let y_mean = unscented_measurement_mean(model, &images, &sigma.mean_weights);

    let (nx, ny) = (x.len(), y.len());
    let mut pyy = model.noise_cov().clone();
    let mut pxy = DMatrix::zeros(nx, ny);
    for ((pt, img), wc) in sigma.points.iter().zip(&images).zip(&sigma.cov_weights) {
        let dy = model.residual(img, &y_mean);
        let dx = pt - x;
        pyy += &dy * dy.transpose() * *wc;
        pxy += &dx * dy.transpose() * *wc;
    }
    let pyy = symmetrize(&pyy);
    let k = gain(&pxy, &pyy)?;
    let mean = x + &k * model.residual(y, &y_mean);
    let cov = symmetrize(&(p - &k * &pyy * k.transpose()));
    Ok(UpdateArtifacts {
        posterior: GaussianComponent::new(comp.weight, mean, cov)?,
        gain: k,
        prior_jacobian: None,
        prior_innovation_cov: pyy,
        predicted_measurement: y_mean,
        prior_sigma: Some(sigma),
        sigma_params: Some(params),
        prior_component: comp.clone(),
    })
}

/// Component updater selection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Updater {
    Ekf,
    Bruf { steps: usize },
    Sigma(UnscentedParams),
}

impl Updater {
    pub const fn ukf() -> Self {
        Updater::Sigma(UnscentedParams::unscented())
    }

    pub const fn ckf() -> Self {
        Updater::Sigma(UnscentedParams::cubature())
    }

    pub fn update<M: MeasurementModel + ?Sized>(
        &self,
        comp: &GaussianComponent,
        model: &M,
        y: &DVector<f64>,
    ) -> Result<UpdateArtifacts> {
        match *self {
            Updater::Ekf => ekf_update(comp, model, y),
            Updater::Bruf { steps } => bruf_update(comp, model, y, steps),
            Updater::Sigma(params) => sigma_update(comp, model, y, params),
        }
    }

    /// Parameters used when a sigma-point weight scheme needs sigma points.
    /// Linearized updaters fall back to the cubature rule.
    pub fn sigma_params(&self) -> UnscentedParams {
        match *self {
            Updater::Sigma(p) => p,
            _ => UnscentedParams::cubature(),
        }
    }
}
