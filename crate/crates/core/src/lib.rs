//! Segmentation and denoising of univariate time series.
//!
//! Two model families are provided:
//!
//! * [`rhlp`]: regression with a hidden logistic process. `K` polynomial
//!   regressions are mixed with time-varying softmax proportions and fitted
//!   by expectation-maximization with a Newton (IRLS) inner solver.
//! * [`piecewise`]: piecewise polynomial regression, either globally optimal
//!   via dynamic programming or by alternating regression and segmentation.
//!
//! [`simulation`] generates data from both models and scores fits; [`io`]
//! reads signals and persists fit reports.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`). The `*64`
//! aliases below name the double-precision instantiations used by the CLI.

pub mod error;
pub mod io;
pub mod linalg;
pub mod piecewise;
pub mod regression;
pub mod rhlp;
pub mod scalar;
pub mod simulation;

pub use error::{Error, Result};
pub use piecewise::{
    fisher_dp, iterative_fisher, multi_start_iterative, IterativeOptions, Partition,
    PiecewiseConfig, PiecewiseFit,
};
pub use regression::{GaussianComponent, PolyBasis, Signal, DEFAULT_VARIANCE_FLOOR};
pub use rhlp::{em_fit, EmConfig, FitReport, InitStrategy, LogisticProcess, RhlpParams};
pub use scalar::Real;

pub type Signal64 = Signal<f64>;
pub type Signal32 = Signal<f32>;
pub type GaussianComponent64 = GaussianComponent<f64>;
pub type PiecewiseConfig64 = PiecewiseConfig<f64>;
pub type PiecewiseFit64 = PiecewiseFit<f64>;
pub type LogisticProcess64 = LogisticProcess<f64>;
pub type RhlpParams64 = RhlpParams<f64>;
pub type EmConfig64 = EmConfig<f64>;
pub type FitReport64 = FitReport<f64>;
pub type FitReport32 = FitReport<f32>;
