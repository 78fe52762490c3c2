//! Piecewise polynomial regression.
//!
//! A signal of `n` samples is cut into `K` contiguous segments `]γ_k, γ_{k+1}]`
//! (indices are sample counts, so segment `k` covers samples `γ_k..γ_{k+1}`
//! in zero-based slice notation). Each segment carries its own polynomial and
//! noise variance, and the fit minimizes
//!
//! ```text
//! J = Σ_k Σ_{i ∈ I_k} [ log σ_k² + (x_i − β_kᵀ r_i)² / σ_k² ]
//! ```
//!
//! [`fisher_dp`] finds the global minimum by dynamic programming over a
//! precomputed [`CostMatrix`]; [`iterative_fisher`] alternates per-segment
//! regressions with re-segmentation under fixed parameters.

mod cost;
mod fisher;
mod iterative;

pub use cost::{build_cost_matrix, CostMatrix};
pub use fisher::{fisher_dp, fisher_dp_with_table, DpTable};
pub use iterative::{
    iterative_fisher, multi_start_iterative, random_partition, IterativeOptions, MultiStartFit,
};

use ndarray::ArrayView1;

use crate::error::{Error, Result};
use crate::regression::{
    design_matrix, least_squares, GaussianComponent, Signal, DEFAULT_VARIANCE_FLOOR,
};
use crate::scalar::Real;

/// Settings shared by the dynamic-programming fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiecewiseConfig<T> {
    /// Polynomial degree `p`.
    pub degree: usize,
    /// Minimum number of samples per segment; `None` means `p + 2`.
    pub min_segment_length: Option<usize>,
    pub variance_floor: T,
}

impl<T: Real> PiecewiseConfig<T> {
    pub fn new(degree: usize) -> Self {
        Self {
            degree,
            min_segment_length: None,
            variance_floor: T::lit(DEFAULT_VARIANCE_FLOOR),
        }
    }

    pub fn with_min_segment_length(mut self, len: usize) -> Self {
        self.min_segment_length = Some(len);
        self
    }

    pub fn with_variance_floor(mut self, floor: T) -> Self {
        self.variance_floor = floor;
        self
    }

    pub fn min_len(&self) -> usize {
        self.min_segment_length.unwrap_or(self.degree + 2)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.min_len() < self.degree + 1 {
            return Err(Error::InvalidArgument(format!(
                "minimum segment length {} cannot identify a degree-{} polynomial",
                self.min_len(),
                self.degree
            )));
        }
        if !(self.variance_floor > T::zero()) {
            return Err(Error::InvalidArgument(
                "variance floor must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Segment boundaries `γ_1 = 0 < γ_2 < … < γ_{K+1} = n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    gamma: Vec<usize>,
}

impl Partition {
    /// Validates boundaries against the signal length and minimum segment length.
    pub fn new(gamma: Vec<usize>, n: usize, min_len: usize) -> Result<Self> {
        if gamma.len() < 2 || gamma[0] != 0 || *gamma.last().unwrap() != n {
            return Err(Error::InvalidArgument(format!(
                "partition must start at 0 and end at {n}: {gamma:?}"
            )));
        }
        for w in gamma.windows(2) {
            if w[1] < w[0] + min_len.max(1) {
                return Err(Error::SegmentTooShort {
                    start: w[0],
                    end: w[1],
                    min_len,
                });
            }
        }
        Ok(Self { gamma })
    }

    /// `K` equal-length segments, boundaries `round(k·n/K)`.
    pub fn uniform(n: usize, segments: usize, min_len: usize) -> Result<Self> {
        if segments == 0 || n < segments * min_len.max(1) {
            return Err(Error::Infeasible {
                n,
                segments,
                min_len,
            });
        }
        let gamma = (0..=segments)
            .map(|k| ((k * n) as f64 / segments as f64).round() as usize)
            .collect();
        Self::new(gamma, n, min_len)
    }

    pub fn gamma(&self) -> &[usize] {
        &self.gamma
    }

    pub fn segments(&self) -> usize {
        self.gamma.len() - 1
    }

    pub fn n(&self) -> usize {
        *self.gamma.last().unwrap()
    }

    /// Half-open sample ranges of each segment.
    pub fn ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.gamma.windows(2).map(|w| w[0]..w[1])
    }

    /// Zero-based segment label of every sample.
    pub fn labels(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n());
        for (k, r) in self.ranges().enumerate() {
            out.extend(std::iter::repeat_n(k, r.len()));
        }
        out
    }
}

/// Result of a piecewise polynomial fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseFit<T> {
    pub partition: Partition,
    pub components: Vec<GaussianComponent<T>>,
    /// Value of `J` at the returned partition and parameters.
    pub criterion_j: T,
    pub log_likelihood: T,
    /// `J` after each regression step (iterative fits) or a single entry.
    pub criterion_trace: Vec<T>,
    pub iterations: usize,
}

impl<T: Real> PiecewiseFit<T> {
    pub(crate) fn assemble(
        partition: Partition,
        components: Vec<GaussianComponent<T>>,
        criterion_j: T,
        criterion_trace: Vec<T>,
        iterations: usize,
    ) -> Self {
        let n = T::count(partition.n());
        let log_likelihood = log_likelihood_from_criterion(criterion_j, n);
        Self {
            partition,
            components,
            criterion_j,
            log_likelihood,
            criterion_trace,
            iterations,
        }
    }

    pub fn segments(&self) -> usize {
        self.components.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.partition.labels()
    }

    /// Piecewise mean curve `β_{ẑ_i}ᵀ r_i`.
    pub fn denoise(&self, t: &[T]) -> Vec<T> {
        self.partition
            .labels()
            .into_iter()
            .zip(t)
            .map(|(k, &ti)| self.components[k].mean_at(ti))
            .collect()
    }
}

/// `L = −½ (J + n log 2π)`.
pub fn log_likelihood_from_criterion<T: Real>(criterion_j: T, n: T) -> T {
    -T::lit(0.5) * (criterion_j + n * (T::lit(2.0) * T::PI()).ln())
}

/// `Σ [log σ² + r²/σ²]` for a segment with residual sum of squares `rss`
/// and `len` samples, using the floored ML variance.
pub(crate) fn floored_cost<T: Real>(rss: T, len: usize, floor: T) -> (T, T) {
    let n = T::count(len);
    let sigma2 = (rss / n).max(floor);
    (n * sigma2.ln() + rss / sigma2, sigma2)
}

/// Fits one segment `]a, b]` by ordinary least squares and returns its
/// contribution to `J` together with the fitted component.
pub fn segment_cost<T: Real>(
    signal: &Signal<T>,
    a: usize,
    b: usize,
    config: &PiecewiseConfig<T>,
) -> Result<(T, GaussianComponent<T>)> {
    let min_len = config.min_len();
    if b > signal.len() || a >= b || b - a < min_len {
        return Err(Error::SegmentTooShort {
            start: a,
            end: b,
            min_len,
        });
    }
    let t = &signal.t()[a..b];
    let x = ArrayView1::from(&signal.x()[a..b]);
    let design = design_matrix(t, config.degree);
    let beta = least_squares(design.view(), x)?;
    let resid = &x - &design.dot(&beta);
    let rss = resid.iter().map(|&r| r * r).sum::<T>();
    let (cost, sigma2) = floored_cost(rss, b - a, config.variance_floor);
    Ok((cost, GaussianComponent::new(beta, sigma2)))
}

/// Fits every segment of `partition` and returns `(J, components)`.
pub fn fit_partition<T: Real>(
    signal: &Signal<T>,
    partition: &Partition,
    config: &PiecewiseConfig<T>,
) -> Result<(T, Vec<GaussianComponent<T>>)> {
    let mut total = T::zero();
    let mut comps = Vec::with_capacity(partition.segments());
    for r in partition.ranges() {
        let (c, comp) = segment_cost(signal, r.start, r.end, config)?;
        total = total + c;
        comps.push(comp);
    }
    Ok((total, comps))
}

/// Evaluates `J` for fixed parameters and partition.
pub fn criterion<T: Real>(
    signal: &Signal<T>,
    partition: &Partition,
    components: &[GaussianComponent<T>],
) -> T {
    let mut total = T::zero();
    for (r, comp) in partition.ranges().zip(components) {
        let ln_s = comp.sigma2.ln();
        for i in r {
            let resid = signal.x()[i] - comp.mean_at(signal.t()[i]);
            total = total + ln_s + resid * resid / comp.sigma2;
        }
    }
    total
}
