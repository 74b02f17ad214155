//! Concrete dynamics and measurement models: the quadratic "Avocado"
//! measurement, generic linear measurements, Earth–Moon CR3BP dynamics and an
//! angles-only (right ascension / declination) sensor.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::updaters::MeasurementModel;

/// `h(x) = (x₁², x₂²)` with isotropic noise.
#[derive(Clone, Debug, PartialEq)]
pub struct Avocado {
    noise: DMatrix<f64>,
}

impl Avocado {
    pub fn new(noise_std: f64) -> Self {
        Self {
            noise: DMatrix::identity(2, 2) * (noise_std * noise_std),
        }
    }
}

impl Default for Avocado {
    /// Noise standard deviation 0.4 on both channels.
    fn default() -> Self {
        Self::new(0.4)
    }
}

pub fn avocado_h(x: &DVector<f64>) -> DVector<f64> {
    DVector::from_vec(vec![x[0] * x[0], x[1] * x[1]])
}

pub fn avocado_jacobian(x: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_vec(vec![2.0 * x[0], 2.0 * x[1]]))
}

impl MeasurementModel for Avocado {
    fn state_dim(&self) -> usize {
        2
    }
    fn measurement_dim(&self) -> usize {
        2
    }
    fn predict(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(avocado_h(x))
    }
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(avocado_jacobian(x))
    }
    fn noise_cov(&self) -> &DMatrix<f64> {
        &self.noise
    }
}

/// `h(x) = H x`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    h: DMatrix<f64>,
    noise: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(h: DMatrix<f64>, noise: DMatrix<f64>) -> Result<Self> {
        if noise.nrows() != h.nrows() || noise.ncols() != h.nrows() {
            return Err(Error::dims("noise covariance must be n_y x n_y"));
        }
        Ok(Self { h, noise })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }
}

impl MeasurementModel for LinearModel {
    fn state_dim(&self) -> usize {
        self.h.ncols()
    }
    fn measurement_dim(&self) -> usize {
        self.h.nrows()
    }
    fn predict(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.h * x)
    }
    fn jacobian(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.h.clone())
    }
    fn noise_cov(&self) -> &DMatrix<f64> {
        &self.noise
    }
}

/// Gravitational constant, m³ s⁻² kg⁻¹.
pub const GRAVITATIONAL_CONSTANT: f64 = 6.6743e-11;
pub const EARTH_MASS_KG: f64 = 5.972e24;
pub const MOON_MASS_KG: f64 = 7.342e22;
/// Earth–Moon distance used as the length unit, metres.
pub const EARTH_MOON_DISTANCE_M: f64 = 384_400e3;

/// Nondimensional Earth–Moon CR3BP constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cr3bpParams {
    /// Moon mass fraction `μ_☾ / (μ_⊕ + μ_☾)`.
    pub mu: f64,
    /// Length unit, metres.
    pub length_unit: f64,
    /// Time unit, seconds.
    pub time_unit: f64,
}

impl Cr3bpParams {
    pub fn from_masses(g: f64, earth_mass: f64, moon_mass: f64, length_unit: f64) -> Self {
        let gm_earth = g * earth_mass;
        let gm_moon = g * moon_mass;
        let mu = gm_moon / (gm_earth + gm_moon);
        let time_unit = (length_unit.powi(3) / (gm_earth + gm_moon)).sqrt();
        Self {
            mu,
            length_unit,
            time_unit,
        }
    }

    pub fn earth_moon() -> Self {
        Self::from_masses(
            GRAVITATIONAL_CONSTANT,
            EARTH_MASS_KG,
            MOON_MASS_KG,
            EARTH_MOON_DISTANCE_M,
        )
    }

    /// Convert seconds to scaled time.
    pub fn seconds_to_time(&self, seconds: f64) -> f64 {
        seconds / self.time_unit
    }

    /// Distances from the Earth and the Moon.
    pub fn primary_distances(&self, x: &DVector<f64>) -> (f64, f64) {
        let (r1, r2, r3) = (x[0], x[1], x[2]);
        let tail = r2 * r2 + r3 * r3;
        let earth = ((r1 + self.mu).powi(2) + tail).sqrt();
        let moon = ((r1 - 1.0 + self.mu).powi(2) + tail).sqrt();
        (earth, moon)
    }
}

impl Default for Cr3bpParams {
    fn default() -> Self {
        Self::earth_moon()
    }
}

const COLLISION_DISTANCE: f64 = 1e-9;

fn checked_distances(x: &DVector<f64>, params: &Cr3bpParams) -> Result<(f64, f64)> {
    if x.len() != 6 {
        return Err(Error::dims("CR3BP state has six entries"));
    }
    let (re, rm) = params.primary_distances(x);
    if !(re >= COLLISION_DISTANCE && rm >= COLLISION_DISTANCE) {
        return Err(Error::SingularPrimaryDistance);
    }
    Ok((re, rm))
}

/// Rotating-frame CR3BP equations of motion.
pub fn cr3bp_derivative(x: &DVector<f64>, params: &Cr3bpParams) -> Result<DVector<f64>> {
    let (re, rm) = checked_distances(x, params)?;
    let mu = params.mu;
    let (r1, r2, r3, v1, v2, v3) = (x[0], x[1], x[2], x[3], x[4], x[5]);
    let ge = (1.0 - mu) / re.powi(3);
    let gm = mu / rm.powi(3);
    Ok(DVector::from_vec(vec![
        v1,
        v2,
        v3,
        r1 + 2.0 * v2 - ge * (r1 + mu) - gm * (r1 - 1.0 + mu),
        r2 - 2.0 * v1 - ge * r2 - gm * r2,
        -ge * r3 - gm * r3,
    ]))
}

/// Jacobi integral `C = r₁² + r₂² + 2(1-μ)/r_⊕ + 2μ/r_☾ - |v|²`.
pub fn jacobi_constant(x: &DVector<f64>, params: &Cr3bpParams) -> Result<f64> {
    let (re, rm) = checked_distances(x, params)?;
    let mu = params.mu;
    let speed_sq = x[3] * x[3] + x[4] * x[4] + x[5] * x[5];
    Ok(x[0] * x[0] + x[1] * x[1] + 2.0 * (1.0 - mu) / re + 2.0 * mu / rm - speed_sq)
}

/// Wrap an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let r = a - two_pi * ((a + PI) / two_pi).floor();
    if r <= -PI {
        r + two_pi
    } else {
        r
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundSensor {
    /// Sensor position in scaled coordinates.
    pub position: [f64; 3],
    /// Angle noise standard deviation, radians, for both channels.
    pub noise_std: f64,
}

/// 16.1 arc-seconds in radians.
pub const DEFAULT_ANGLE_NOISE_RAD: f64 = 16.1 * PI / (180.0 * 3600.0);

impl Default for GroundSensor {
    fn default() -> Self {
        Self {
            position: [0.0; 3],
            noise_std: DEFAULT_ANGLE_NOISE_RAD,
        }
    }
}

struct LineOfSight {
    d: [f64; 3],
    range_sq: f64,
    planar: f64,
}

impl GroundSensor {
    fn line_of_sight(&self, x: &DVector<f64>) -> Result<LineOfSight> {
        if x.len() < 3 {
            return Err(Error::dims("state must carry a position"));
        }
        let d = [
            x[0] - self.position[0],
            x[1] - self.position[1],
            x[2] - self.position[2],
        ];
        let range_sq = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        if !(range_sq > 0.0) {
            return Err(Error::TargetAtSensor);
        }
        let planar = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if planar == 0.0 {
            return Err(Error::DeclinationSingularity);
        }
        Ok(LineOfSight { d, range_sq, planar })
    }
}

/// Right ascension and declination, radians.
pub fn radec_h(x: &DVector<f64>, sensor: &GroundSensor) -> Result<DVector<f64>> {
    let los = sensor.line_of_sight(x)?;
    let ra = los.d[1].atan2(los.d[0]);
    let dec = (los.d[2] / los.range_sq.sqrt()).clamp(-1.0, 1.0).asin();
    Ok(DVector::from_vec(vec![ra, dec]))
}

/// `2 × n` Jacobian of [`radec_h`]; velocity columns are zero.
pub fn radec_jacobian(x: &DVector<f64>, sensor: &GroundSensor) -> Result<DMatrix<f64>> {
    let LineOfSight { d, range_sq, planar } = sensor.line_of_sight(x)?;
    let planar_sq = planar * planar;
    let mut j = DMatrix::zeros(2, x.len());
    j[(0, 0)] = -d[1] / planar_sq;
    j[(0, 1)] = d[0] / planar_sq;
    j[(1, 0)] = -d[0] * d[2] / (range_sq * planar);
    j[(1, 1)] = -d[1] * d[2] / (range_sq * planar);
    j[(1, 2)] = planar / range_sq;
    Ok(j)
}

/// Angles-only measurement of a six-dimensional CR3BP state.
#[derive(Clone, Debug, PartialEq)]
pub struct RaDecModel {
    pub sensor: GroundSensor,
    noise: DMatrix<f64>,
}

impl RaDecModel {
    pub fn new(sensor: GroundSensor) -> Self {
        let var = sensor.noise_std * sensor.noise_std;
        Self {
            sensor,
            noise: DMatrix::identity(2, 2) * var,
        }
    }
}

impl Default for RaDecModel {
    fn default() -> Self {
        Self::new(GroundSensor::default())
    }
}

impl MeasurementModel for RaDecModel {
    fn state_dim(&self) -> usize {
        6
    }
    fn measurement_dim(&self) -> usize {
        2
    }
    fn predict(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        radec_h(x, &self.sensor)
    }
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        radec_jacobian(x, &self.sensor)
    }
    fn noise_cov(&self) -> &DMatrix<f64> {
        &self.noise
    }
    fn residual(&self, y: &DVector<f64>, y_pred: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![wrap_angle(y[0] - y_pred[0]), y[1] - y_pred[1]])
    }
}
