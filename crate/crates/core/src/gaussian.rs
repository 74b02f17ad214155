//! Gaussian components, mixtures and the density arithmetic everything else
//! builds on.
//!
//! Densities are evaluated in the log domain through a lower-triangular
//! factorization of the covariance. When the factorization fails, a single
//! diagonal jitter of `1e-12 * trace(P) / n` is added and the factorization is
//! retried; a second failure is reported as [`Error::SingularCovariance`].

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const JITTER_SCALE: f64 = 1e-12;

/// Replace `p` by `(p + pᵀ) / 2`.
pub fn symmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

/// Lower-triangular factor of a symmetric PSD matrix under the jitter policy.
pub fn cholesky(p: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if !p.is_square() {
        return Err(Error::dims("covariance must be square"));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let sym = symmetrize(p);
    if let Some(c) = Cholesky::new(sym.clone()) {
        return Ok(c);
    }
    let n = sym.nrows().max(1) as f64;
    let jitter = JITTER_SCALE * sym.trace() / n;
    if !(jitter > 0.0) {
        return Err(Error::SingularCovariance);
    }
    let mut repaired = sym;
    for i in 0..repaired.nrows() {
        repaired[(i, i)] += jitter;
    }
    Cholesky::new(repaired).ok_or(Error::SingularCovariance)
}

/// Lower-triangular square root `L` with `L Lᵀ = p`.
pub fn sqrt_lower(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(cholesky(p)?.l())
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Squared Mahalanobis norm `dᵀ P⁻¹ d` using a precomputed factor.
pub(crate) fn mahalanobis_sq(chol: &Cholesky<f64, Dyn>, d: &DVector<f64>) -> f64 {
    let z = chol
        .l_dirty()
        .solve_lower_triangular(d)
        .expect("cholesky factor has a positive diagonal");
    z.norm_squared()
}

/// `ln N(x; mean, cov)` computed from a residual `x - mean` and a factor.
pub(crate) fn log_gaussian_from_residual(residual: &DVector<f64>, chol: &Cholesky<f64, Dyn>) -> f64 {
    let n = residual.len() as f64;
    -0.5 * (mahalanobis_sq(chol, residual) + log_det(chol) + n * LN_2PI)
}

/// `ln N(x; mean, cov)`.
pub fn log_gaussian_pdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    if x.len() != mean.len() || cov.nrows() != x.len() || cov.ncols() != x.len() {
        return Err(Error::dims(format!(
            "x has {} entries, mean {}, covariance {}x{}",
            x.len(),
            mean.len(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    if x.iter().chain(mean.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let chol = cholesky(cov)?;
    Ok(log_gaussian_from_residual(&(x - mean), &chol))
}

/// Density of a Gaussian with a cached factorization, for repeated evaluation.
#[derive(Clone, Debug)]
pub struct FactoredGaussian {
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl FactoredGaussian {
    pub fn new(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() {
            return Err(Error::dims("covariance does not match mean"));
        }
        let chol = cholesky(cov)?;
        let log_norm = -0.5 * (log_det(&chol) + mean.len() as f64 * LN_2PI);
        Ok(Self {
            mean: mean.clone(),
            chol,
            log_norm,
        })
    }

    pub fn ln_pdf(&self, x: &DVector<f64>) -> f64 {
        self.ln_pdf_residual(&(x - &self.mean))
    }

    pub fn ln_pdf_residual(&self, residual: &DVector<f64>) -> f64 {
        self.log_norm - 0.5 * mahalanobis_sq(&self.chol, residual)
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }
}

/// `ln Σ exp(v)` with the max-shift technique. Empty or all `-inf` input gives `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Exp-normalize a vector of log-weights into probabilities.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    if log_weights.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::NonFiniteInput);
    }
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let shifted: Vec<f64> = log_weights.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = shifted.iter().sum();
    Ok(shifted.into_iter().map(|w| w / total).collect())
}

/// One weighted Gaussian of a mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianComponent {
    pub fn new(weight: f64, mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != mean.len() || covariance.ncols() != mean.len() {
            return Err(Error::dims("component covariance does not match mean"));
        }
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        Ok(Self {
            weight,
            mean,
            covariance: symmetrize(&covariance),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn ln_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        log_gaussian_pdf(x, &self.mean, &self.covariance)
    }
}

/// An ordered collection of Gaussian components over a common state space.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    components: Vec<GaussianComponent>,
    dim: usize,
}

impl GaussianMixture {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        let dim = components.first().ok_or(Error::EmptyMixture)?.dim();
        if components.iter().any(|c| c.dim() != dim) {
            return Err(Error::dims("mixture components differ in dimension"));
        }
        Ok(Self { components, dim })
    }

    /// A mixture of equally weighted components sharing one covariance.
    pub fn uniform(means: &[DVector<f64>], covariance: &DMatrix<f64>) -> Result<Self> {
        let w = 1.0 / means.len().max(1) as f64;
        let components = means
            .iter()
            .map(|m| GaussianComponent::new(w, m.clone(), covariance.clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(components)
    }

    pub fn single(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        Self::new(vec![GaussianComponent::new(1.0, mean, covariance)?])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    /// Rescale weights to sum to one.
    pub fn normalize(&mut self) -> Result<()> {
        let logs: Vec<f64> = self.components.iter().map(|c| c.weight.ln()).collect();
        let w = normalize_log_weights(&logs)?;
        for (c, w) in self.components.iter_mut().zip(w) {
            c.weight = w;
        }
        Ok(())
    }

    /// Mixture mean and covariance (law of total variance).
    pub fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let mut mean = DVector::zeros(self.dim);
        for c in &self.components {
            mean.axpy(c.weight, &c.mean, 1.0);
        }
        let mut cov = DMatrix::zeros(self.dim, self.dim);
        for c in &self.components {
            let d = &c.mean - &mean;
            cov += (&c.covariance + &d * d.transpose()) * c.weight;
        }
        (mean, symmetrize(&cov))
    }

    /// `ln p(x)` for the mixture, summed in the log domain.
    pub fn ln_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        let terms = self
            .components
            .iter()
            .map(|c| Ok(c.weight.ln() + c.ln_pdf(x)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(log_sum_exp(&terms))
    }
}

/// Mean and covariance of a mixture. Errors on an empty mixture.
pub fn mixture_moments(mix: &GaussianMixture) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if mix.is_empty() {
        return Err(Error::EmptyMixture);
    }
    Ok(mix.moments())
}

/// Density samples on a rectilinear 2D grid, stored row-major with the first
/// axis outermost.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub axes: [Vec<f64>; 2],
    pub values: Vec<f64>,
}

impl GridField {
    /// Evenly spaced axes over `[lo, hi]` with `nodes` samples each, values zeroed.
    pub fn uniform(x_range: (f64, f64), y_range: (f64, f64), nodes: usize) -> Result<Self> {
        if nodes < 2 || !(x_range.1 > x_range.0) || !(y_range.1 > y_range.0) {
            return Err(Error::InvalidConfig("grid needs two increasing axes".into()));
        }
        let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
            (0..nodes)
                .map(|i| lo + (hi - lo) * i as f64 / (nodes - 1) as f64)
                .collect()
        };
        Ok(Self {
            axes: [axis(x_range), axis(y_range)],
            values: vec![0.0; nodes * nodes],
        })
    }

    pub fn from_axes(axes: [Vec<f64>; 2]) -> Result<Self> {
        for a in &axes {
            if a.len() < 2 || a.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::InvalidConfig("grid axes must be strictly increasing".into()));
            }
        }
        let n = axes[0].len() * axes[1].len();
        Ok(Self {
            axes,
            values: vec![0.0; n],
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.axes[0].len(), self.axes[1].len())
    }

    pub fn node(&self, i: usize, j: usize) -> DVector<f64> {
        DVector::from_vec(vec![self.axes[0][i], self.axes[1][j]])
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.axes[1].len() + j]
    }

    pub fn same_axes(&self, other: &GridField) -> bool {
        self.axes == other.axes
    }

    /// Trapezoid-rule integral of the node values.
    pub fn trapezoid_mass(&self) -> f64 {
        let (n0, n1) = self.shape();
        let w = |axis: &[f64], k: usize| -> f64 {
            let left = if k > 0 { axis[k] - axis[k - 1] } else { 0.0 };
            let right = if k + 1 < axis.len() { axis[k + 1] - axis[k] } else { 0.0 };
            0.5 * (left + right)
        };
        let mut total = 0.0;
        for i in 0..n0 {
            let wi = w(&self.axes[0], i);
            for j in 0..n1 {
                total += wi * w(&self.axes[1], j) * self.values[i * n1 + j];
            }
        }
        total
    }

    /// Fill the node values from a function of the node coordinates.
    pub(crate) fn fill_with<F>(&mut self, f: F)
    where
        F: Fn(&DVector<f64>) -> f64 + Sync,
    {
        use rayon::prelude::*;
        let axes = &self.axes;
        let n1 = axes[1].len();
        self.values.par_iter_mut().enumerate().for_each(|(k, v)| {
            let node = DVector::from_vec(vec![axes[0][k / n1], axes[1][k % n1]]);
            *v = f(&node);
        });
    }
}

/// A 2D component reduced to scalars for fast node evaluation.
#[derive(Clone, Copy)]
struct PlanarTerm {
    ln_scale: f64,
    mx: f64,
    my: f64,
    l11: f64,
    l21: f64,
    l22: f64,
}

impl PlanarTerm {
    fn new(c: &GaussianComponent) -> Result<Self> {
        let l = cholesky(&c.covariance)?.l();
        let (l11, l21, l22) = (l[(0, 0)], l[(1, 0)], l[(1, 1)]);
        Ok(Self {
            ln_scale: c.weight.ln() - LN_2PI - l11.ln() - l22.ln(),
            mx: c.mean[0],
            my: c.mean[1],
            l11,
            l21,
            l22,
        })
    }

    #[inline]
    fn ln_value(&self, x: f64, y: f64) -> f64 {
        let z1 = (x - self.mx) / self.l11;
        let z2 = (y - self.my - self.l21 * z1) / self.l22;
        self.ln_scale - 0.5 * (z1 * z1 + z2 * z2)
    }
}

/// Evaluate `Σ wᵢ N(node; μᵢ, Pᵢ)` on the nodes of `grid`.
pub fn mixture_pdf_on_grid(mix: &GaussianMixture, grid: &GridField) -> Result<GridField> {
    if mix.dim() != 2 {
        return Err(Error::GridNot2D);
    }
    let terms = mix
        .components()
        .iter()
        .filter(|c| c.weight > 0.0)
        .map(PlanarTerm::new)
        .collect::<Result<Vec<_>>>()?;
    let mut out = GridField::from_axes(grid.axes.clone())?;
    let mut scratch = vec![0.0; terms.len()];
    let n1 = grid.axes[1].len();
    for (k, v) in out.values.iter_mut().enumerate() {
        let (x, y) = (grid.axes[0][k / n1], grid.axes[1][k % n1]);
        let mut top = f64::NEG_INFINITY;
        for (s, t) in scratch.iter_mut().zip(&terms) {
            *s = t.ln_value(x, y);
            top = top.max(*s);
        }
        *v = if top == f64::NEG_INFINITY {
            0.0
        } else {
            top.exp() * scratch.iter().map(|s| (s - top).exp()).sum::<f64>()
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn explicit_log_pdf(x: &DVector<f64>, m: &DVector<f64>, p: &DMatrix<f64>) -> f64 {
        let d = x - m;
        let inv = p.clone().try_inverse().unwrap();
        let q = (d.transpose() * inv * &d)[(0, 0)];
        -0.5 * q - 0.5 * ((2.0 * std::f64::consts::PI).powi(x.len() as i32) * p.determinant()).ln()
    }

    #[test]
    fn standard_normal_at_mode() {
        let v = log_gaussian_pdf(&dvector![0.0], &dvector![0.0], &dmatrix![1.0]).unwrap();
        assert!((v + 0.918_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn zero_quadratic_form_gives_normalizer() {
        let p = dmatrix![2.0, 0.3; 0.3, 0.5];
        let m = dvector![1.0, -2.0];
        let v = log_gaussian_pdf(&m, &m, &p).unwrap();
        let expect = -0.5 * ((2.0 * std::f64::consts::PI).powi(2) * p.determinant()).ln();
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn matches_explicit_inverse_formula() {
        let p = dmatrix![1.3, -0.4; -0.4, 0.7];
        let m = dvector![0.2, 1.1];
        let x = dvector![-0.5, 0.4];
        let v = log_gaussian_pdf(&x, &m, &p).unwrap();
        assert!((v - explicit_log_pdf(&x, &m, &p)).abs() < 1e-10);
    }

    #[test]
    fn non_finite_input_rejected() {
        let r = log_gaussian_pdf(&dvector![f64::NAN], &dvector![0.0], &dmatrix![1.0]);
        assert_eq!(r, Err(Error::NonFiniteInput));
    }

    #[test]
    fn singular_covariance_after_jitter() {
        let r = log_gaussian_pdf(&dvector![0.0, 0.0], &dvector![0.0, 0.0], &dmatrix![1.0, 1.0; 1.0, 1.0]);
        // rank-one but PSD: jitter repairs it
        assert!(r.is_ok());
        let r = log_gaussian_pdf(&dvector![0.0, 0.0], &dvector![0.0, 0.0], &dmatrix![1.0, 0.0; 0.0, -1.0]);
        assert_eq!(r, Err(Error::SingularCovariance));
        let r = log_gaussian_pdf(&dvector![0.0], &dvector![0.0], &dmatrix![0.0]);
        assert_eq!(r, Err(Error::SingularCovariance));
    }

    #[test]
    fn normalize_edge_cases() {
        let w = normalize_log_weights(&[-3.0; 4]).unwrap();
        assert!(w.iter().all(|v| (v - 0.25).abs() < 1e-15));
        let w = normalize_log_weights(&[0.0, f64::NEG_INFINITY]).unwrap();
        assert_eq!(w, vec![1.0, 0.0]);
        assert_eq!(
            normalize_log_weights(&[f64::NEG_INFINITY; 3]),
            Err(Error::DegenerateWeights)
        );
        let w = normalize_log_weights(&[-1e6, -1e6 - 1.0]).unwrap();
        assert!((w[0] - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn moments_of_symmetric_pair() {
        let s = dmatrix![0.5, 0.1; 0.1, 0.3];
        let a = dvector![1.0, 2.0];
        let mix = GaussianMixture::new(vec![
            GaussianComponent::new(0.5, a.clone(), s.clone()).unwrap(),
            GaussianComponent::new(0.5, -&a, s.clone()).unwrap(),
        ])
        .unwrap();
        let (m, p) = mixture_moments(&mix).unwrap();
        assert!(m.norm() < 1e-15);
        assert!((p - (&s + &a * a.transpose())).norm() < 1e-14);
    }

    #[test]
    fn single_component_moments() {
        let mix = GaussianMixture::single(dvector![3.0, -1.0], dmatrix![2.0, 0.0; 0.0, 1.0]).unwrap();
        let (m, p) = mix.moments();
        assert_eq!(m, dvector![3.0, -1.0]);
        assert_eq!(p, dmatrix![2.0, 0.0; 0.0, 1.0]);
    }

    #[test]
    fn mismatched_dims_rejected() {
        let r = GaussianMixture::new(vec![
            GaussianComponent::new(0.5, dvector![0.0], dmatrix![1.0]).unwrap(),
            GaussianComponent::new(0.5, dvector![0.0, 0.0], DMatrix::identity(2, 2)).unwrap(),
        ]);
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
        assert_eq!(GaussianMixture::new(vec![]), Err(Error::EmptyMixture));
    }

    #[test]
    fn grid_value_of_standard_normal() {
        let mix = GaussianMixture::single(dvector![0.0, 0.0], DMatrix::identity(2, 2)).unwrap();
        let grid = GridField::uniform((-1.0, 1.0), (-1.0, 1.0), 3).unwrap();
        let f = mixture_pdf_on_grid(&mix, &grid).unwrap();
        assert!((f.value(1, 1) - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
    }

    #[test]
    fn duplicated_components_give_same_field() {
        let c = GaussianComponent::new(0.5, dvector![0.3, -0.2], dmatrix![0.4, 0.1; 0.1, 0.9]).unwrap();
        let dup = GaussianMixture::new(vec![c.clone(), c.clone()]).unwrap();
        let one = GaussianMixture::single(c.mean.clone(), c.covariance.clone()).unwrap();
        let grid = GridField::uniform((-2.0, 2.0), (-2.0, 2.0), 9).unwrap();
        let a = mixture_pdf_on_grid(&dup, &grid).unwrap();
        let b = mixture_pdf_on_grid(&one, &grid).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 1e-15 * y.max(1e-300) + 1e-300);
        }
    }

    #[test]
    fn grid_rejects_non_2d() {
        let mix = GaussianMixture::single(dvector![0.0], dmatrix![1.0]).unwrap();
        let grid = GridField::uniform((-1.0, 1.0), (-1.0, 1.0), 3).unwrap();
        assert_eq!(mixture_pdf_on_grid(&mix, &grid), Err(Error::GridNot2D));
    }

    #[test]
    fn trapezoid_mass_of_constant() {
        let mut g = GridField::uniform((0.0, 2.0), (0.0, 3.0), 5).unwrap();
        g.values.iter_mut().for_each(|v| *v = 1.5);
        assert!((g.trapezoid_mass() - 9.0).abs() < 1e-12);
    }
}
