//! Accuracy and consistency metrics, plus the grid-evaluated true posterior.
//!
//! [`kld_grid`] is the squared-log-difference score
//! `(1/s) Σ ½ (ln P − ln Q)²` over every grid node, with `s` the number of
//! nodes per axis. It is *not* the Kullback–Leibler integral; the textbook
//! divergence is available separately as [`kl_divergence_grid`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{cholesky, mahalanobis_sq, FactoredGaussian, GaussianMixture, GridField};
use crate::updaters::MeasurementModel;

/// Densities below this value are raised to it before taking logs.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
    count: usize,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
        self.count += 1;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.carry
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Arithmetic mean, `None` when nothing was added.
    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.total() / self.count as f64)
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        for v in iter {
            s.add(v);
        }
        s
    }
}

/// Compensated mean of a slice; `None` when empty.
pub fn compensated_mean(values: &[f64]) -> Option<f64> {
    values.iter().copied().collect::<CompensatedSum>().mean()
}

/// `sqrt((1/n) (x − x̂)ᵀ (x − x̂))`.
pub fn rmse(truth: &DVector<f64>, estimate: &DVector<f64>) -> Result<f64> {
    if truth.len() != estimate.len() || truth.is_empty() {
        return Err(Error::dims("rmse needs two vectors of equal nonzero length"));
    }
    Ok(((truth - estimate).norm_squared() / truth.len() as f64).sqrt())
}

/// RMSE over the first three (position) entries.
pub fn position_rmse(truth: &DVector<f64>, estimate: &DVector<f64>) -> Result<f64> {
    if truth.len() < 3 || estimate.len() < 3 {
        return Err(Error::dims("position rmse needs at least three entries"));
    }
    rmse(&truth.rows(0, 3).into_owned(), &estimate.rows(0, 3).into_owned())
}

/// `(1/n) (x − x̂)ᵀ P⁻¹ (x − x̂)`, solved through a factorization of `P`.
pub fn snees(truth: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    if truth.len() != mean.len() || cov.nrows() != mean.len() {
        return Err(Error::dims("snees inputs disagree in dimension"));
    }
    let chol = cholesky(cov)?;
    Ok(mahalanobis_sq(&chol, &(truth - mean)) / truth.len() as f64)
}

fn check_grids(p: &GridField, q: &GridField) -> Result<()> {
    if !p.same_axes(q) || p.values.len() != q.values.len() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// The grid divergence score with the default `1/s` prefactor.
pub fn kld_grid(p: &GridField, q: &GridField) -> Result<f64> {
    let s = p.axes[0].len() as f64;
    kld_grid_scaled(p, q, 1.0 / s)
}

/// `prefactor · Σ ½ (ln P − ln Q)²` over all nodes, both fields floored.
pub fn kld_grid_scaled(p: &GridField, q: &GridField, prefactor: f64) -> Result<f64> {
    check_grids(p, q)?;
    let total: CompensatedSum = p
        .values
        .iter()
        .zip(&q.values)
        .map(|(a, b)| {
            let d = a.max(DENSITY_FLOOR).ln() - b.max(DENSITY_FLOOR).ln();
            0.5 * d * d
        })
        .collect();
    Ok(prefactor * total.total())
}

/// Textbook `KL(Q ‖ P) = ∫ Q ln(Q / P)` by the trapezoid rule, with `Q` the
/// reference (true) density. Both fields are floored.
pub fn kl_divergence_grid(estimate: &GridField, truth: &GridField) -> Result<f64> {
    check_grids(estimate, truth)?;
    let mut integrand = GridField::from_axes(truth.axes.clone())?;
    for (k, v) in integrand.values.iter_mut().enumerate() {
        let q = truth.values[k].max(DENSITY_FLOOR);
        let p = estimate.values[k].max(DENSITY_FLOOR);
        *v = if truth.values[k] > 0.0 { q * (q / p).ln() } else { 0.0 };
    }
    Ok(integrand.trapezoid_mass())
}

/// Node-wise `prior(x) · N(y; h(x), R)`, normalized to unit trapezoid mass.
pub fn true_posterior_grid<M: MeasurementModel + ?Sized>(
    prior: &GaussianMixture,
    model: &M,
    y: &DVector<f64>,
    grid: &GridField,
) -> Result<GridField> {
    if prior.dim() != 2 || model.state_dim() != 2 {
        return Err(Error::GridNot2D);
    }
    if y.len() != model.measurement_dim() {
        return Err(Error::dims("measurement length disagrees with the model"));
    }
    let noise = FactoredGaussian::new(&DVector::zeros(y.len()), model.noise_cov())?;
    let factored = prior
        .components()
        .iter()
        .map(|c| Ok((c.weight.ln(), FactoredGaussian::new(&c.mean, &c.covariance)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut out = GridField::from_axes(grid.axes.clone())?;
    out.fill_with(|node| {
        let terms: Vec<f64> = factored.iter().map(|(lw, g)| lw + g.ln_pdf(node)).collect();
        let ln_prior = crate::gaussian::log_sum_exp(&terms);
        match model.predict(node) {
            Ok(pred) => {
                let r = model.residual(y, &pred);
                (ln_prior + noise.ln_pdf_residual(&r)).exp()
            }
            Err(_) => 0.0,
        }
    });
    let mass = out.trapezoid_mass();
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::PosteriorOffGrid);
    }
    for v in &mut out.values {
        *v /= mass;
    }
    Ok(out)
}

/// Aggregated metrics for one method at one component count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub components: usize,
    pub trials: usize,
    pub flagged_trials: usize,
    pub rmse: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position_rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kld: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kl_divergence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snees: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn rmse_examples() {
        let x = dvector![1.0, 2.0];
        assert_eq!(rmse(&x, &x).unwrap(), 0.0);
        let e = rmse(&dvector![3.0, 4.0], &dvector![0.0, 0.0]).unwrap();
        assert!((e - 5.0 / 2f64.sqrt()).abs() < 1e-15);
        let p = rmse(&dvector![4.0, 3.0], &dvector![0.0, 0.0]).unwrap();
        assert_eq!(e, p);
    }

    #[test]
    fn snees_whitened_unit_errors() {
        let s = 0.3;
        let cov = DMatrix::identity(3, 3) * (s * s);
        let v = snees(&dvector![s, -s, s], &dvector![0.0, 0.0, 0.0], &cov).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        assert_eq!(snees(&dvector![1.0], &dvector![1.0], &dmatrix![2.0]).unwrap(), 0.0);
    }

    #[test]
    fn kld_constant_offset() {
        let mut q = GridField::uniform((0.0, 1.0), (0.0, 1.0), 11).unwrap();
        q.values.iter_mut().enumerate().for_each(|(k, v)| *v = 0.1 + k as f64 * 1e-3);
        let mut p = q.clone();
        p.values.iter_mut().for_each(|v| *v *= std::f64::consts::E);
        assert_eq!(kld_grid(&q, &q).unwrap(), 0.0);
        assert!((kld_grid(&p, &q).unwrap() - 11.0 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn kld_rejects_mismatched_grids() {
        let a = GridField::uniform((0.0, 1.0), (0.0, 1.0), 5).unwrap();
        let b = GridField::uniform((0.0, 2.0), (0.0, 1.0), 5).unwrap();
        assert_eq!(kld_grid(&a, &b), Err(Error::GridMismatch));
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.total(), 1000.0);
    }
}
