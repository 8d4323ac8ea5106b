//! Langevin Monte Carlo samplers of strong order 1 and 1.5.
//!
//! The crate discretizes the overdamped Langevin SDE
//! `dX = −∇U(X) dt + √2 dW` with
//!
//! * [`Scheme::Lmc`], the Euler–Maruyama step;
//! * [`Scheme::Telmc`], the order-1.5 strong Taylor step, which needs
//!   `∇²U·v` and `∇(ΔU)`;
//! * [`Scheme::Rk`], a three-stage stochastic Runge–Kutta family that reaches
//!   the same order with gradients only. [`RkCoefficients::RKLMC_2G`] needs two
//!   gradients per step.
//!
//! Module map:
//!
//! | module | contents |
//! |---|---|
//! | [`rng`] | keyed random streams and Brownian increments |
//! | [`potentials`] | target models with analytic derivatives |
//! | [`schemes`] | the step maps and their coefficients |
//! | [`simulator`] | deterministic parallel driver with common-path coupling |
//! | [`metrics`] | strong error, slope fits, 1-D Wasserstein distance |
//! | [`experiments`] | the experiment protocols and their CSV reports |
//!
//! ```
//! use rklmc::{make_two_mode_gmm, run_ensemble, Scheme, SimulationSpec};
//!
//! let model = make_two_mode_gmm(10);
//! let spec = SimulationSpec::to_time(Scheme::RKLMC_2G, 1.0 / 64.0, 2.0).unwrap();
//! let batch = run_ensemble(&spec, &model, 100, 7, None).unwrap();
//! assert_eq!(batch.terminals.rows(), 100);
//! ```
//!
//! The guide under `book/` walks through each piece; its code listings are
//! compiled and run as doc-tests of this crate.

pub mod experiments;
mod linalg;
pub mod metrics;
pub mod parse;
pub mod potentials;
pub mod rng;
pub mod schemes;
pub mod simulator;

pub use experiments::{
    convergence_experiment, dimension_experiment, eight_mode_experiment, histogram_experiment, ConvergenceConfig,
    DimensionConfig, EightModeConfig, ExperimentError, ExperimentReport, HistogramConfig, ModelKind,
};
pub use metrics::{fit_loglog_slope, gmm_marginal_density, rmse, wasserstein_1d};
pub use potentials::{
    make_blr, make_eight_mode_gmm, make_quadratic, make_two_mode_gmm, BlrDataset, Capabilities, Potential,
};
pub use rng::{aggregate_coarse_pair, derive_stream, sample_increment_pair, IncrementPair, StreamKey};
pub use schemes::{
    check_order_conditions, compute_kappa1, one_step, solve_two_gradient, stepsize_bound, RkCoefficients, Scheme,
    StepsizeConstants,
};
pub use simulator::{run_coupled, run_ensemble, run_trajectory, InitialState, SampleBatch, SimulationSpec};

// The book's listings, compiled as doc-tests. One module per chapter so a
// failure points at its chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/increments.md")]
    mod increments {}
    #[doc = include_str!("../../../book/src/potentials.md")]
    mod potentials {}
    #[doc = include_str!("../../../book/src/schemes.md")]
    mod schemes {}
    #[doc = include_str!("../../../book/src/order-conditions.md")]
    mod order_conditions {}
    #[doc = include_str!("../../../book/src/coupling.md")]
    mod coupling {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
