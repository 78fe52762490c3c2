//! Synthetic data generators and the three evaluation criteria
//! (misclassification rate, denoising error, running time).

mod benchmark;
mod criteria;
mod scenario;

pub use benchmark::{
    cell_seed, run_benchmark, BenchmarkConfig, BenchmarkOutput, BenchmarkRecord, BenchmarkRow,
    Method,
};
pub use criteria::{
    denoising_error, misclassification_rate, transition_errors, transition_times, MeanCurve,
};
pub use scenario::{simulate_piecewise, simulate_rhlp, PiecewiseScenario};
