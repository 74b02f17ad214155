use gmm_weights::engmf::{resample_mixture, silverman_bandwidth};
use gmm_weights::gaussian::{mixture_pdf_on_grid, GaussianComponent, GaussianMixture, GridField};
use gmm_weights::harness::{case_discrepancies, LinearCase, Scenario, ScenarioConfig};
use gmm_weights::metrics::{kl_divergence_grid, kld_grid, snees};
use gmm_weights::models::{wrap_angle, Avocado};
use gmm_weights::updaters::{bruf_update, ekf_update, unscented_sigma_points, UnscentedParams};
use gmm_weights::weights::{
    gmm_measurement_update, innovation_cov_posterior, innovation_cov_prior, PosteriorCovForm,
    TraditionalSigmaForm, WeightScheme,
};
use gmm_weights::Updater;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;

fn spd(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| {
        let a = DMatrix::from_vec(n, n, v);
        &a * a.transpose() + DMatrix::identity(n, n) * 0.05
    })
}

fn vector(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(lo..hi, n).prop_map(DVector::from_vec)
}

fn avocado_mixture() -> impl Strategy<Value = GaussianMixture> {
    (1usize..6, spd(2)).prop_flat_map(|(k, cov)| {
        (
            prop::collection::vec(0.05f64..1.0, k),
            prop::collection::vec(vector(2, -4.5, 1.5), k),
            Just(cov * 0.3),
        )
            .prop_map(|(w, means, cov)| {
                let comps = w
                    .into_iter()
                    .zip(means)
                    .map(|(w, m)| GaussianComponent::new(w, m, cov.clone()).unwrap())
                    .collect();
                let mut mix = GaussianMixture::new(comps).unwrap();
                mix.normalize().unwrap();
                mix
            })
    })
}

fn all_updaters() -> [Updater; 4] {
    [Updater::Ekf, Updater::Bruf { steps: 3 }, Updater::ukf(), Updater::ckf()]
}

fn all_schemes() -> [WeightScheme; 6] {
    [
        WeightScheme::TraditionalDensity,
        WeightScheme::ImprovedDensity,
        WeightScheme::TraditionalSigma(TraditionalSigmaForm::PredictedMean),
        WeightScheme::TraditionalSigma(TraditionalSigmaForm::SigmaMixture),
        WeightScheme::TraditionalSigma(TraditionalSigmaForm::SigmaLikelihood),
        WeightScheme::ImprovedSigma,
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn posterior_weights_are_a_probability_vector(mix in avocado_mixture(), y in vector(2, 0.0, 4.0)) {
        for updater in all_updaters() {
            for scheme in all_schemes() {
                let post = gmm_measurement_update(&mix, &Avocado::default(), &y, updater, scheme).unwrap();
                let w = post.weights();
                prop_assert_eq!(w.len(), mix.len());
                prop_assert!(w.iter().all(|v| v.is_finite() && *v >= 0.0));
                prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_measurements_give_exact_weights(index in 0usize..10_000, seed in any::<u64>()) {
        let mut cfg = ScenarioConfig::new(Scenario::LinearCheck);
        cfg.seed = seed;
        let case = LinearCase::generate(&cfg, index).unwrap();
        let worst = case_discrepancies(&case).unwrap().into_iter().fold(0.0, f64::max);
        prop_assert!(worst < 1e-8, "discrepancy {}", worst);
    }

    #[test]
    fn single_bruf_step_is_the_ekf(mean in vector(2, -4.0, 2.0), cov in spd(2), y in vector(2, 0.0, 4.0)) {
        let model = Avocado::default();
        let comp = GaussianComponent::new(1.0, mean, cov).unwrap();
        let a = ekf_update(&comp, &model, &y).unwrap().posterior;
        let b = bruf_update(&comp, &model, &y, 1).unwrap().posterior;
        prop_assert!((a.mean - b.mean).amax() < 1e-12);
        prop_assert!((a.covariance - b.covariance).amax() < 1e-12);
    }

    #[test]
    fn posterior_innovation_forms_agree(cov in spd(3), noise in spd(2), h in prop::collection::vec(-2.0f64..2.0, 12)) {
        let prior_jac = DMatrix::from_vec(2, 3, h[..6].to_vec());
        let post_jac = DMatrix::from_vec(2, 3, h[6..].to_vec());
        let innov = innovation_cov_prior(&prior_jac, &cov, &noise).unwrap();
        let gain = &cov * prior_jac.transpose() * innov.clone().try_inverse().unwrap();
        let post = (DMatrix::identity(3, 3) - &gain * &prior_jac) * &cov;
        let post = (&post + post.transpose()) * 0.5;
        let eval = |f| innovation_cov_posterior(&post_jac, &prior_jac, &post, &innov, &gain, &noise, f).unwrap();
        let j = eval(PosteriorCovForm::Joseph);
        prop_assert_eq!(j.form_used, PosteriorCovForm::Joseph);
        let scale = j.value.norm();
        for f in [PosteriorCovForm::Direct, PosteriorCovForm::NoiseInverse] {
            prop_assert!((eval(f).value - &j.value).norm() <= 1e-8 * scale);
        }
        prop_assert!(SymmetricEigen::new(j.value).eigenvalues.min() > 0.0);
    }

    #[test]
    fn sigma_points_reconstruct_moments(mean in vector(4, -3.0, 3.0), cov in spd(4)) {
        for p in [UnscentedParams::unscented(), UnscentedParams::cubature(), UnscentedParams::new(0.5, 2.0, 1.0)] {
            let s = unscented_sigma_points(&mean, &cov, p).unwrap();
            prop_assert_eq!(s.len(), 9);
            prop_assert!((s.weighted_mean() - &mean).amax() < 1e-10);
            prop_assert!((s.weighted_spread(&mean) - &cov).amax() < 1e-10 * (1.0 + cov.amax()));
        }
    }

    #[test]
    fn grid_scores_are_nonnegative(a in avocado_mixture(), b in avocado_mixture()) {
        let grid = GridField::uniform((-9.0, 6.0), (-7.5, 7.5), 61).unwrap();
        let p = mixture_pdf_on_grid(&a, &grid).unwrap();
        let q = mixture_pdf_on_grid(&b, &grid).unwrap();
        prop_assert!(kld_grid(&p, &q).unwrap() >= 0.0);
        prop_assert_eq!(kld_grid(&p, &p).unwrap(), 0.0);
        prop_assert!(kl_divergence_grid(&p, &q).unwrap() > -1e-3);
        prop_assert!(kl_divergence_grid(&p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn snees_scales_quadratically(x in vector(3, -2.0, 2.0), cov in spd(3), k in 0.1f64..10.0) {
        let zero = DVector::zeros(3);
        let base = snees(&x, &zero, &cov).unwrap();
        prop_assert!(base >= 0.0);
        let scaled = snees(&(&x * k), &zero, &cov).unwrap();
        prop_assert!((scaled - k * k * base).abs() <= 1e-9 * (1.0 + scaled));
    }

    #[test]
    fn resampling_is_deterministic(mix in avocado_mixture(), m in 1usize..200, seed in any::<u64>()) {
        let a = resample_mixture(&mix, m, seed).unwrap();
        let b = resample_mixture(&mix, m, seed).unwrap();
        prop_assert_eq!(a.len(), m);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn bandwidth_shrinks_with_members(n in 1usize..10, m in 1usize..10_000) {
        let b = silverman_bandwidth(n, m);
        prop_assert!(b > 0.0);
        prop_assert!(silverman_bandwidth(n, m + 1) < b);
    }

    #[test]
    fn wrapped_angles_stay_in_range(a in -100.0f64..100.0) {
        let w = wrap_angle(a);
        prop_assert!(w > -std::f64::consts::PI - 1e-12 && w <= std::f64::consts::PI + 1e-12);
        let turns = (a - w) / std::f64::consts::TAU;
        prop_assert!((turns - turns.round()).abs() < 1e-9);
    }
}
