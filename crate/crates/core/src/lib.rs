//! Gaussian-mixture measurement updates with prior-linearized (traditional)
//! and posterior-linearized (improved) component weights.
//!
//! The crate is organised bottom-up:
//!
//! - [`gaussian`]: components, mixtures, log-domain densities, grid fields.
//! - [`updaters`]: EKF, BRUF and sigma-point component updates.
//! - [`weights`]: the weight schemes and the full mixture update.
//! - [`models`]: the Avocado measurement, CR3BP dynamics, RA/Dec sensor.
//! - [`propagation`]: adaptive RK8(7) integration.
//! - [`engmf`]: ensemble ↔ kernel mixture plumbing and the filter cycle.
//! - [`metrics`]: RMSE, grid divergence, SNEES, grid true posterior.
//! - [`harness`]: scenarios, Monte Carlo runners and result files.
//!
//! ```
//! use gmm_weights::gaussian::GaussianMixture;
//! use gmm_weights::models::Avocado;
//! use gmm_weights::updaters::Updater;
//! use gmm_weights::weights::{gmm_measurement_update, WeightScheme};
//! use nalgebra::{dmatrix, dvector};
//!
//! let prior = GaussianMixture::single(dvector![-3.5, 0.0], dmatrix![1.0, -0.5; -0.5, 1.0])?;
//! let post = gmm_measurement_update(
//!     &prior,
//!     &Avocado::default(),
//!     &dvector![0.0, 0.0],
//!     Updater::Ekf,
//!     WeightScheme::ImprovedDensity,
//! )?;
//! assert_eq!(post.len(), 1);
//! # Ok::<(), gmm_weights::Error>(())
//! ```

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engmf;
pub mod error;
pub mod gaussian;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod propagation;
pub mod updaters;
pub mod weights;

pub use error::{Error, Result};
pub use gaussian::{GaussianComponent, GaussianMixture, GridField};
pub use updaters::{MeasurementModel, UnscentedParams, Updater};
pub use weights::{gmm_measurement_update, PosteriorCovForm, TraditionalSigmaForm, WeightScheme};

/// The guide's code blocks, compiled and run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/mixtures.md")]
    mod mixtures {}
    #[doc = include_str!("../../../book/src/updaters.md")]
    mod updaters {}
    #[doc = include_str!("../../../book/src/weights.md")]
    mod weights {}
    #[doc = include_str!("../../../book/src/sigma-points.md")]
    mod sigma_points {}
    #[doc = include_str!("../../../book/src/avocado.md")]
    mod avocado {}
    #[doc = include_str!("../../../book/src/cislunar.md")]
    mod cislunar {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
