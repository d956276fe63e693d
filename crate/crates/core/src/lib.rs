//! Continuous-time movement models built from process convolutions.
//!
//! A path is white noise integrated to Brownian motion and smoothed by a
//! gaussian kernel ([`kernels`]), optionally on a deformed clock ([`warp`]).
//! The induced gaussian process gives a closed-form likelihood ([`gp`]),
//! which [`mcmc`] samples and [`bma`] averages across warps. [`network`]
//! couples several individuals through a latent-space dynamic network.
//!
//! ```
//! use convmove::simulate::{simulate_trajectory, uniform_schedule, SimScenario};
//! use convmove::{build_basis, marginal_loglik, KernelSpec, MovementParams, TimeGrid};
//!
//! let kernel = KernelSpec::gaussian_integrated(0.005).unwrap();
//! let sim = simulate_trajectory(&SimScenario {
//!     kernel,
//!     warp: None,
//!     grid_nodes: 100,
//!     domain: [0.0, 1.0],
//!     meas_var: 1e-4,
//!     proc_var: 0.05,
//!     origin: [0.0, 0.0],
//!     schedule: uniform_schedule(50, [0.0, 1.0]),
//!     seed: 1,
//! })
//! .unwrap();
//! let h = build_basis(&kernel, &sim.observed.times, &TimeGrid::unit(100).unwrap(), None).unwrap();
//! let params = MovementParams::new(1e-4, 0.05, 0.005, [0.0, 0.0]).unwrap();
//! assert!(marginal_loglik(&sim.observed, &h, &params).unwrap().is_finite());
//! ```

pub mod bma;
pub mod error;
pub mod gp;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod mcmc;
pub mod network;
pub mod priors;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod telemetry;
pub mod warp;

pub use bma::{
    averaged_warp_derivative, model_averaged_predict, posterior_model_probs, MixtureComponent, WarpDerivativeCurve,
    WarpMixture,
};
pub use error::{Error, Result};
pub use gp::{
    conditional_moments, credible_circle_radius, marginal_loglik, path_summaries, predict_trajectory,
    process_covariance, LikelihoodRoute, MovementParams, PathSummary, TrajectoryDraws,
};
pub use kernels::{build_basis, BasisMatrix, KernelFamily, KernelSpec, TimeGrid};
pub use mcmc::{
    deviance_screen, fit_models, fit_models_cached, fit_single, FitConfig, PhiGramCache, PosteriorChains, ScreenResult,
};
pub use network::{fit_group, ChainSettings, GroupModelSpec, LatentPaths, NetworkChains, NetworkMode};
pub use priors::{GammaPrior, InverseGamma};
pub use simulate::{simulate_group, simulate_trajectory, GroupScenario, SimScenario};
pub use telemetry::{CoordKind, ProjectionMeta, TelemetrySet, Track};
pub use warp::{enumerate_warp_candidates, tdcf, tdcf_derivative, WarpShape, WarpSpec};
