//! Adaptive embedded Runge–Kutta 8(7) integrator (Dormand–Prince 13-stage
//! pair). The eighth-order solution is propagated; the seventh-order one
//! only drives step-size control.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub initial_step: f64,
    pub max_steps: usize,
    pub safety_factor: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 1e-12,
            initial_step: 1e-3,
            max_steps: 1_000_000,
            safety_factor: 0.9,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tolerance(tol: f64) -> Self {
        Self {
            rel_tol: tol,
            abs_tol: tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidConfig("integrator tolerances must be positive".into()));
        }
        if !(self.safety_factor > 0.0 && self.safety_factor < 1.0) {
            return Err(Error::InvalidConfig("safety factor must lie in (0, 1)".into()));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::InvalidConfig("initial step must be positive".into()));
        }
        Ok(())
    }
}

const STAGES: usize = 13;

const C: [f64; STAGES] = [
    0.0,
    1.0 / 18.0,
    1.0 / 12.0,
    1.0 / 8.0,
    5.0 / 16.0,
    3.0 / 8.0,
    59.0 / 400.0,
    93.0 / 200.0,
    5_490_023_248.0 / 9_719_169_821.0,
    13.0 / 20.0,
    1_201_146_811.0 / 1_299_019_798.0,
    1.0,
    1.0,
];

#[rustfmt::skip]
const A: [&[f64]; STAGES] = [
    &[],
    &[1.0 / 18.0],
    &[1.0 / 48.0, 1.0 / 16.0],
    &[1.0 / 32.0, 0.0, 3.0 / 32.0],
    &[5.0 / 16.0, 0.0, -75.0 / 64.0, 75.0 / 64.0],
    &[3.0 / 80.0, 0.0, 0.0, 3.0 / 16.0, 3.0 / 20.0],
    &[29_443_841.0 / 614_563_906.0, 0.0, 0.0, 77_736_538.0 / 692_538_347.0,
      -28_693_883.0 / 1_125_000_000.0, 23_124_283.0 / 1_800_000_000.0],
    &[16_016_141.0 / 946_692_911.0, 0.0, 0.0, 61_564_180.0 / 158_732_637.0,
      22_789_713.0 / 633_445_777.0, 545_815_736.0 / 2_771_057_229.0,
      -180_193_667.0 / 1_043_307_555.0],
    &[39_632_708.0 / 573_591_083.0, 0.0, 0.0, -433_636_366.0 / 683_701_615.0,
      -421_739_975.0 / 2_616_292_301.0, 100_302_831.0 / 723_423_059.0,
      790_204_164.0 / 839_813_087.0, 800_635_310.0 / 3_783_071_287.0],
    &[246_121_993.0 / 1_340_847_787.0, 0.0, 0.0, -37_695_042_795.0 / 15_268_766_246.0,
      -309_121_744.0 / 1_061_227_803.0, -12_992_083.0 / 490_766_935.0,
      6_005_943_493.0 / 2_108_947_869.0, 393_006_217.0 / 1_396_673_457.0,
      123_872_331.0 / 1_001_029_789.0],
    &[-1_028_468_189.0 / 846_180_014.0, 0.0, 0.0, 8_478_235_783.0 / 508_512_852.0,
      1_311_729_495.0 / 1_432_422_823.0, -10_304_129_995.0 / 1_701_304_382.0,
      -48_777_925_059.0 / 3_047_939_560.0, 15_336_726_248.0 / 1_032_824_649.0,
      -45_442_868_181.0 / 3_398_467_696.0, 3_065_993_473.0 / 597_172_653.0],
    &[185_892_177.0 / 718_116_043.0, 0.0, 0.0, -3_185_094_517.0 / 667_107_341.0,
      -477_755_414.0 / 1_098_053_517.0, -703_635_378.0 / 230_739_211.0,
      5_731_566_787.0 / 1_027_545_527.0, 5_232_866_602.0 / 850_066_563.0,
      -4_093_664_535.0 / 808_688_257.0, 3_962_137_247.0 / 1_805_957_418.0,
      65_686_358.0 / 487_910_083.0],
    &[403_863_854.0 / 491_063_109.0, 0.0, 0.0, -5_068_492_393.0 / 434_740_067.0,
      -411_421_997.0 / 543_043_805.0, 652_783_627.0 / 914_296_604.0,
      11_173_962_825.0 / 925_320_556.0, -13_158_990_841.0 / 6_184_727_034.0,
      3_936_647_629.0 / 1_978_049_680.0, -160_528_059.0 / 685_178_525.0,
      248_638_103.0 / 1_413_531_060.0, 0.0],
];

#[rustfmt::skip]
const B8: [f64; STAGES] = [
    14_005_451.0 / 335_480_064.0, 0.0, 0.0, 0.0, 0.0,
    -59_238_493.0 / 1_068_277_825.0, 181_606_767.0 / 758_867_731.0,
    561_292_985.0 / 797_845_732.0, -1_041_891_430.0 / 1_371_343_529.0,
    760_417_239.0 / 1_151_165_299.0, 118_820_643.0 / 751_138_087.0,
    -528_747_749.0 / 2_220_607_170.0, 1.0 / 4.0,
];

#[rustfmt::skip]
const B7: [f64; STAGES] = [
    13_451_932.0 / 455_176_623.0, 0.0, 0.0, 0.0, 0.0,
    -808_719_846.0 / 976_000_145.0, 1_757_004_468.0 / 5_645_159_321.0,
    656_045_339.0 / 265_891_186.0, -3_867_574_721.0 / 1_518_517_206.0,
    465_885_868.0 / 322_736_535.0, 53_011_238.0 / 667_516_719.0,
    2.0 / 45.0, 0.0,
];

const MIN_SHRINK: f64 = 0.2;
const MAX_GROW: f64 = 5.0;

/// One trial step: returns the eighth-order state and the scaled error norm.
fn trial_step<F>(
    f: &F,
    t: f64,
    x: &DVector<f64>,
    h: f64,
    cfg: &IntegratorConfig,
) -> Result<(DVector<f64>, f64)>
where
    F: Fn(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let mut k: Vec<DVector<f64>> = Vec::with_capacity(STAGES);
    for s in 0..STAGES {
        let mut xs = x.clone();
        for (j, a) in A[s].iter().enumerate() {
            if *a != 0.0 {
                xs.axpy(h * a, &k[j], 1.0);
            }
        }
        k.push(f(t + C[s] * h, &xs)?);
    }
    let mut high = x.clone();
    let mut diff = DVector::zeros(x.len());
    for s in 0..STAGES {
        if B8[s] != 0.0 {
            high.axpy(h * B8[s], &k[s], 1.0);
        }
        let db = B8[s] - B7[s];
        if db != 0.0 {
            diff.axpy(h * db, &k[s], 1.0);
        }
    }
    let mut err: f64 = 0.0;
    for i in 0..x.len() {
        let scale = cfg.abs_tol + cfg.rel_tol * x[i].abs().max(high[i].abs());
        err = err.max(diff[i].abs() / scale);
    }
    if !err.is_finite() || high.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    Ok((high, err))
}

/// Integrate `ẋ = f(t, x)` from `t0` to `t1 ≥ t0`.
pub fn propagate<F>(
    x0: &DVector<f64>,
    t0: f64,
    t1: f64,
    derivative: F,
    cfg: &IntegratorConfig,
) -> Result<DVector<f64>>
where
    F: Fn(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    cfg.validate()?;
    if !(t1 >= t0) {
        return Err(Error::InvalidConfig("propagation end precedes start".into()));
    }
    let mut x = x0.clone();
    let mut t = t0;
    let mut h = cfg.initial_step.min(t1 - t0);
    let mut attempts = 0usize;
    while t < t1 {
        if attempts >= cfg.max_steps {
            return Err(Error::IntegrationBudgetExhausted);
        }
        attempts += 1;
        let last = t + h >= t1;
        let step = if last { t1 - t } else { h };
        let (next, err) = match trial_step(&derivative, t, &x, step, cfg) {
            Ok(v) => v,
            // Non-finite trial: shrink and retry. Model errors propagate.
            Err(Error::NonFiniteInput) => {
                h = step * MIN_SHRINK;
                continue;
            }
            Err(e) => return Err(e),
        };
        let factor = if err == 0.0 {
            MAX_GROW
        } else {
            (cfg.safety_factor * err.powf(-1.0 / 8.0)).clamp(MIN_SHRINK, MAX_GROW)
        };
        if err <= 1.0 {
            x = next;
            t = if last { t1 } else { t + step };
            h = step * factor;
        } else {
            h = step * factor.min(1.0);
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn zero_interval_returns_start() {
        let x0 = dvector![1.0, 2.0];
        let x = propagate(&x0, 3.0, 3.0, |_, x| Ok(x.clone()), &IntegratorConfig::default()).unwrap();
        assert_eq!(x, x0);
    }

    #[test]
    fn tableau_consistency() {
        for (s, row) in A.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            assert!((sum - C[s]).abs() < 1e-14, "row {s}");
        }
        assert!((B8.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!((B7.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for k in 1..8 {
            let q: f64 = B8.iter().zip(C).map(|(b, c)| b * c.powi(k)).sum();
            assert!((q - 1.0 / (k + 1) as f64).abs() < 1e-14, "quadrature order {k}");
        }
    }

    #[test]
    fn exponential_decay() {
        let x = propagate(&dvector![1.0], 0.0, 2.0, |_, x| Ok(-x), &IntegratorConfig::default()).unwrap();
        assert!((x[0] - (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn budget_exhausted() {
        let cfg = IntegratorConfig {
            max_steps: 3,
            ..IntegratorConfig::default()
        };
        let r = propagate(&dvector![1.0], 0.0, 10.0, |_, x| Ok(-x), &cfg);
        assert_eq!(r, Err(Error::IntegrationBudgetExhausted));
    }

    #[test]
    fn reversed_interval_rejected() {
        let r = propagate(&dvector![1.0], 1.0, 0.0, |_, x| Ok(-x), &IntegratorConfig::default());
        assert!(matches!(r, Err(Error::InvalidConfig(_))));
    }
}
