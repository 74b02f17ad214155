use gmm_weights::engmf::{engmf_step, sample_gaussian, EngmfConfig, Epoch};
use gmm_weights::gaussian::{GaussianComponent, GaussianMixture, GridField};
use gmm_weights::harness::{
    grid_mean, nrho_initial_state, run_avocado, run_nrho, Method, Scenario, ScenarioConfig, SchemeKind,
    UpdaterKind, NRHO_PERIOD,
};
use gmm_weights::metrics::true_posterior_grid;
use gmm_weights::models::{cr3bp_derivative, Avocado, Cr3bpParams, LinearModel};
use gmm_weights::propagation::{propagate, IntegratorConfig};
use gmm_weights::weights::{gmm_measurement_update, WeightScheme};
use gmm_weights::Updater;
use nalgebra::{dmatrix, dvector, DMatrix, DVector};

fn small_avocado() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(Scenario::Avocado);
    cfg.seed = 11;
    cfg.monte_carlo = Some(4);
    cfg.components = Some(20);
    cfg.avocado.grid_nodes = 81;
    cfg
}

fn small_nrho() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(Scenario::Nrho);
    cfg.seed = 5;
    cfg.monte_carlo = Some(2);
    cfg.components = Some(12);
    cfg.nrho.orbits = 1;
    cfg.nrho.tracklets_per_orbit = 1;
    cfg.nrho.tracklet_hours = 0.5;
    cfg
}

fn kalman(mean: &DVector<f64>, cov: &DMatrix<f64>, h: &DMatrix<f64>, r: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let s = h * cov * h.transpose() + r;
    let k = cov * h.transpose() * s.try_inverse().unwrap();
    let m = mean + &k * (y - h * mean);
    let p = (DMatrix::identity(mean.len(), mean.len()) - &k * h) * cov;
    (m, p)
}

#[test]
fn grid_posterior_matches_kalman_for_linear_gaussian() {
    let mean = dvector![-0.5, 0.3];
    let cov = dmatrix![0.8, 0.2; 0.2, 0.5];
    let h = dmatrix![1.0, 0.5; 0.0, 1.0];
    let r = dmatrix![0.3, 0.0; 0.0, 0.2];
    let y = dvector![0.4, -0.2];
    let model = LinearModel::new(h.clone(), r.clone()).unwrap();
    let prior = GaussianMixture::single(mean.clone(), cov.clone()).unwrap();
    let grid = GridField::uniform((-6.0, 6.0), (-6.0, 6.0), 241).unwrap();
    let post = true_posterior_grid(&prior, &model, &y, &grid).unwrap();
    let (km, _) = kalman(&mean, &cov, &h, &r, &y);
    let gm = grid_mean(&post);
    assert!((&gm - &km).amax() < 1e-6, "grid mean {gm}");
}

#[test]
fn mixture_update_matches_kalman_for_single_component() {
    let mean = dvector![1.0, -1.0];
    let cov = dmatrix![1.0, 0.3; 0.3, 0.6];
    let h = dmatrix![2.0, 0.0; 1.0, 1.0];
    let r = DMatrix::identity(2, 2) * 0.1;
    let y = dvector![1.5, 0.2];
    let model = LinearModel::new(h.clone(), r.clone()).unwrap();
    let prior = GaussianMixture::single(mean.clone(), cov.clone()).unwrap();
    let (km, kp) = kalman(&mean, &cov, &h, &r, &y);
    for updater in [Updater::Ekf, Updater::Bruf { steps: 7 }, Updater::ukf(), Updater::ckf()] {
        let post = gmm_measurement_update(&prior, &model, &y, updater, WeightScheme::ImprovedDensity).unwrap();
        let c = &post.components()[0];
        assert!((&c.mean - &km).amax() < 1e-10);
        assert!((&c.covariance - &kp).amax() < 1e-10);
    }
}

#[test]
fn engmf_tracks_the_kalman_posterior_with_many_members() {
    let mean = dvector![0.5, -0.5];
    let cov = dmatrix![1.0, 0.4; 0.4, 0.7];
    let h = dmatrix![1.0, 0.0; 0.0, 1.0];
    let r = DMatrix::identity(2, 2) * 0.5;
    let y = dvector![1.0, 0.5];
    let model = LinearModel::new(h.clone(), r.clone()).unwrap();
    let m = 2000;
    let ens = sample_gaussian(&mean, &cov, m, 99).unwrap();
    let still = |_: f64, x: &DVector<f64>| Ok(DVector::zeros(x.len()));
    let cfg = EngmfConfig {
        updater: Updater::Ekf,
        scheme: WeightScheme::ImprovedDensity,
        integrator: IntegratorConfig::default(),
    };
    let epochs = [Epoch {
        time: 1.0,
        measurement: Some(y.clone()),
    }];
    let run = engmf_step(&ens, 0.0, &epochs, &still, &model, &cfg).unwrap();
    // The kernel mixture spreads the prior by the bandwidth factor.
    let beta2 = gmm_weights::engmf::silverman_bandwidth(2, m);
    let (km, kp) = kalman(&mean, &(&cov * (1.0 + beta2)), &h, &r, &y);
    let snap = &run.snapshots[0];
    let se = (kp.diagonal().max() / m as f64).sqrt();
    assert!((&snap.mean - &km).amax() < 5.0 * se * 3.0, "{} vs {}", snap.mean, km);
    assert!((&snap.covariance - &kp).amax() < 0.1 * kp.amax());
    assert_eq!(run.ensemble.len(), m);
}

#[test]
fn single_component_avocado_reports_match_across_schemes() {
    let cfg = small_avocado().with_components(1);
    let t = run_avocado(&cfg.with_method(Method::new(UpdaterKind::Ekf, SchemeKind::Traditional))).unwrap();
    let i = run_avocado(&cfg.with_method(Method::new(UpdaterKind::Ekf, SchemeKind::Improved))).unwrap();
    assert_eq!(t.report.rmse, i.report.rmse);
    assert_eq!(t.report.kld, i.report.kld);
    assert_eq!(t.report.kl_divergence, i.report.kl_divergence);
    assert_eq!(t.trials, i.trials);
}

#[test]
fn avocado_runs_are_reproducible() {
    let cfg = small_avocado().with_method(Method::new(UpdaterKind::Ckf, SchemeKind::ImprovedSigma));
    let a = run_avocado(&cfg).unwrap();
    let b = run_avocado(&cfg).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.trials, b.trials);
    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(run_avocado(&other).unwrap().report.rmse, a.report.rmse);
}

#[test]
fn nrho_runs_are_reproducible() {
    let cfg = small_nrho();
    let a = run_nrho(&cfg).unwrap();
    let b = run_nrho(&cfg).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.trials, b.trials);
    assert_eq!(a.trials.len(), 2 * 4);
}

#[test]
fn nrho_needs_enough_members() {
    let cfg = small_nrho().with_components(6);
    assert!(run_nrho(&cfg).is_err());
}

#[test]
fn symmetric_prior_keeps_symmetric_weights() {
    // h is even in each coordinate, so mirrored components must keep equal weight.
    let cov = dmatrix![0.4, 0.0; 0.0, 0.3];
    let comps = vec![
        GaussianComponent::new(0.5, dvector![-1.2, 0.4], cov.clone()).unwrap(),
        GaussianComponent::new(0.5, dvector![1.2, 0.4], cov).unwrap(),
    ];
    let mix = GaussianMixture::new(comps).unwrap();
    let y = dvector![1.1, 0.3];
    for updater in [Updater::Ekf, Updater::Bruf { steps: 4 }, Updater::ukf(), Updater::ckf()] {
        for scheme in [WeightScheme::TraditionalDensity, WeightScheme::ImprovedDensity, WeightScheme::ImprovedSigma] {
            let w = gmm_measurement_update(&mix, &Avocado::default(), &y, updater, scheme).unwrap().weights();
            assert!((w[0] - w[1]).abs() < 1e-12, "{updater:?} {scheme:?}: {w:?}");
        }
    }
}

#[test]
fn cr3bp_reversal_symmetry() {
    // x(t) solves the system iff S x(−t) does, S = diag(1, −1, 1, −1, 1, −1).
    let params = Cr3bpParams::earth_moon();
    let f = |_: f64, x: &DVector<f64>| cr3bp_derivative(x, &params);
    let cfg = IntegratorConfig::default();
    let s = DVector::from_row_slice(&[1.0, -1.0, 1.0, -1.0, 1.0, -1.0]);
    let x0 = nrho_initial_state();
    let tau = 0.3 * NRHO_PERIOD;
    let x1 = propagate(&x0, 0.0, tau, f, &cfg).unwrap();
    let back = propagate(&x1.component_mul(&s), 0.0, tau, f, &cfg).unwrap();
    assert!((back.component_mul(&s) - &x0).amax() < 1e-10);
}

#[test]
fn tighter_tolerance_does_not_hurt() {
    let (a, w) = (0.3, 1.5);
    let f = |_: f64, x: &DVector<f64>| Ok(DVector::from_vec(vec![-a * x[0] + w * x[1], -w * x[0] - a * x[1]]));
    let x0 = dvector![0.7, 0.2];
    let t = 3.0;
    let exact = DVector::from_vec(vec![
        (w * t).cos() * x0[0] + (w * t).sin() * x0[1],
        -(w * t).sin() * x0[0] + (w * t).cos() * x0[1],
    ]) * (-a * t).exp();
    let err = |tol: f64| (propagate(&x0, 0.0, t, f, &IntegratorConfig::with_tolerance(tol)).unwrap() - &exact).norm();
    let mut last = f64::INFINITY;
    for tol in [1e-6, 5e-7, 1e-8, 5e-9, 1e-10] {
        let e = err(tol);
        assert!(e <= last * 1.5 + 1e-15, "tol {tol}: {e} after {last}");
        last = e;
    }
    assert!(last < 1e-9);
}
