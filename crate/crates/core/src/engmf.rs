//! Ensemble Gaussian mixture filter: particles are turned into a kernel
//! mixture with a Silverman bandwidth, updated as a mixture, then resampled.
//!
//! Random streams are keyed by `(seed, member index)` so members can be drawn
//! in parallel without changing the result.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{cholesky, mixture_moments, symmetrize, GaussianMixture};
use crate::propagation::{propagate, IntegratorConfig};
use crate::updaters::{MeasurementModel, Updater};
use crate::weights::{gmm_measurement_update, WeightScheme};

/// A set of equally weighted state samples plus the seed they descend from.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub members: Vec<DVector<f64>>,
    pub seed: u64,
}

impl Ensemble {
    pub fn new(members: Vec<DVector<f64>>, seed: u64) -> Result<Self> {
        let dim = members.first().ok_or(Error::DegenerateEnsemble)?.len();
        if members.iter().any(|m| m.len() != dim) {
            return Err(Error::dims("ensemble members differ in dimension"));
        }
        Ok(Self { members, seed })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.members.first().map_or(0, |m| m.len())
    }

    /// Sample mean and unbiased sample covariance.
    pub fn sample_moments(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let m = self.len();
        if m < 2 {
            return Err(Error::DegenerateEnsemble);
        }
        let n = self.dim();
        let mut mean = DVector::zeros(n);
        for x in &self.members {
            mean += x;
        }
        mean /= m as f64;
        let mut cov = DMatrix::zeros(n, n);
        for x in &self.members {
            let d = x - &mean;
            cov += &d * d.transpose();
        }
        cov /= (m - 1) as f64;
        Ok((mean, symmetrize(&cov)))
    }
}

/// Squared Silverman bandwidth `β² = (4/(n+2))^{2/(n+4)} · M^{−2/(n+4)}`.
pub fn silverman_bandwidth(n_x: usize, m: usize) -> f64 {
    let n = n_x as f64;
    let e = 2.0 / (n + 4.0);
    (4.0 / (n + 2.0)).powf(e) * (m as f64).powf(-e)
}

/// Uniformly weighted kernel mixture centred on the members, sharing the
/// covariance `β_S² Ĉ`.
pub fn ensemble_to_mixture(ens: &Ensemble) -> Result<GaussianMixture> {
    let (_, cov) = ens.sample_moments()?;
    let kernel = cov * silverman_bandwidth(ens.dim(), ens.len());
    cholesky(&kernel).map_err(|_| Error::DegenerateEnsemble)?;
    GaussianMixture::uniform(&ens.members, &kernel)
}

pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random stream number `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const SELECTION_STREAM: u64 = u64::MAX;

/// Systematic selection of `m` component indices from normalized weights.
fn systematic_indices(weights: &[f64], m: usize, u: f64) -> Vec<usize> {
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cumulative.push(acc);
    }
    let last_live = weights.iter().rposition(|w| *w > 0.0).unwrap_or(0);
    let mut out = Vec::with_capacity(m);
    let mut k = 0;
    for i in 0..m {
        let target = (u + i as f64) / m as f64 * acc;
        while k < last_live && cumulative[k] <= target {
            k += 1;
        }
        out.push(k);
    }
    out
}

/// Draw `m` members from a normalized mixture.
pub fn resample_mixture(mix: &GaussianMixture, m: usize, seed: u64) -> Result<Ensemble> {
    let u: f64 = stream_rng(seed, SELECTION_STREAM).gen();
    let picks = systematic_indices(&mix.weights(), m, u);
    let factors = mix
        .components()
        .iter()
        .map(|c| cholesky(&c.covariance).map(|ch| ch.l()))
        .collect::<Result<Vec<_>>>()?;
    let n = mix.dim();
    let members = picks
        .par_iter()
        .enumerate()
        .map(|(i, &k)| {
            let mut rng = stream_rng(seed, i as u64);
            let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            &mix.components()[k].mean + &factors[k] * z
        })
        .collect();
    Ensemble::new(members, seed)
}

/// Draw `m` members from `N(mean, cov)`.
pub fn sample_gaussian(mean: &DVector<f64>, cov: &DMatrix<f64>, m: usize, seed: u64) -> Result<Ensemble> {
    let l = cholesky(cov)?.l();
    let members = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            mean + &l * z
        })
        .collect();
    Ensemble::new(members, seed)
}

/// Propagate every member from `t0` to `t1` in parallel.
pub fn propagate_ensemble<D>(
    ens: &Ensemble,
    t0: f64,
    t1: f64,
    dynamics: &D,
    cfg: &IntegratorConfig,
) -> Result<Ensemble>
where
    D: Fn(f64, &DVector<f64>) -> Result<DVector<f64>> + Sync,
{
    let members = ens
        .members
        .par_iter()
        .map(|x| propagate(x, t0, t1, dynamics, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        members,
        seed: ens.seed,
    })
}

/// A measurement epoch; `measurement: None` means propagate only.
#[derive(Clone, Debug, PartialEq)]
pub struct Epoch {
    pub time: f64,
    pub measurement: Option<DVector<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngmfConfig {
    pub updater: Updater,
    pub scheme: WeightScheme,
    pub integrator: IntegratorConfig,
}

/// Filter state at one epoch, after the update when a measurement was used.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub epoch: usize,
    pub time: f64,
    pub updated: bool,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EngmfRun {
    pub ensemble: Ensemble,
    pub snapshots: Vec<Snapshot>,
}

/// Run the propagate / update / resample cycle over `epochs`.
pub fn engmf_step<D, M>(
    ens: &Ensemble,
    t0: f64,
    epochs: &[Epoch],
    dynamics: &D,
    model: &M,
    cfg: &EngmfConfig,
) -> Result<EngmfRun>
where
    D: Fn(f64, &DVector<f64>) -> Result<DVector<f64>> + Sync,
    M: MeasurementModel + ?Sized,
{
    if epochs.windows(2).any(|w| !(w[1].time > w[0].time)) || epochs.first().is_some_and(|e| e.time < t0) {
        return Err(Error::InvalidConfig("epochs must increase from the start time".into()));
    }
    let m = ens.len();
    let mut current = ens.clone();
    let mut t = t0;
    let mut snapshots = Vec::with_capacity(epochs.len());
    for (k, epoch) in epochs.iter().enumerate() {
        current = propagate_ensemble(&current, t, epoch.time, dynamics, &cfg.integrator)
            .map_err(|e| e.at_epoch(k))?;
        t = epoch.time;
        let snapshot = match &epoch.measurement {
            Some(y) => {
                let run = || -> Result<(Ensemble, DVector<f64>, DMatrix<f64>)> {
                    let prior = ensemble_to_mixture(&current)?;
                    let post = gmm_measurement_update(&prior, model, y, cfg.updater, cfg.scheme)?;
                    let (mean, cov) = mixture_moments(&post)?;
                    let next = resample_mixture(&post, m, derive_seed(ens.seed, k as u64 + 1))?;
                    Ok((next, mean, cov))
                };
                let (next, mean, covariance) = run().map_err(|e| e.at_epoch(k))?;
                current = next;
                Snapshot {
                    epoch: k,
                    time: t,
                    updated: true,
                    mean,
                    covariance,
                }
            }
            None => {
                let (mean, covariance) = current.sample_moments().map_err(|e| e.at_epoch(k))?;
                Snapshot {
                    epoch: k,
                    time: t,
                    updated: false,
                    mean,
                    covariance,
                }
            }
        };
        snapshots.push(snapshot);
    }
    Ok(EngmfRun {
        ensemble: current,
        snapshots,
    })
}
