use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::logistic::{
    log_proportions, proportions_matrix, softmax_pair, solve_with_covariates, IrlsOptions,
};
use super::{LogisticProcess, Posteriors, RhlpParams};
use crate::error::{Error, Result};
use crate::linalg::householder_least_squares;
use crate::piecewise::Partition;
use crate::regression::{
    design_matrix, least_squares, GaussianComponent, Signal, DEFAULT_VARIANCE_FLOOR,
};
use crate::scalar::Real;

/// Posterior column mass below which a component is considered empty.
const EMPTY_COMPONENT_MASS: f64 = 1e-10;

/// How the EM iterations are started.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitStrategy {
    /// Uniform `K`-segment split: per-segment OLS for `β_k`, `σ²_k = 1`, `w = 0`.
    #[default]
    Uniform,
    /// The uniform start plus `starts` runs whose cut indices are randomly
    /// jittered; the run with the largest final log-likelihood wins.
    Randomized { starts: usize },
}

/// EM settings for one `(K, p, q)` model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig<T> {
    pub k: usize,
    pub p: usize,
    pub q: usize,
    /// Stop once the log-likelihood increases by less than this.
    pub epsilon: T,
    pub max_iter: usize,
    pub irls: IrlsOptions<T>,
    pub variance_floor: T,
    pub init: InitStrategy,
}

impl<T: Real> EmConfig<T> {
    pub fn new(k: usize, p: usize, q: usize) -> Self {
        Self {
            k,
            p,
            q,
            epsilon: T::lit(1e-6),
            max_iter: 1000,
            irls: IrlsOptions::default(),
            variance_floor: T::lit(DEFAULT_VARIANCE_FLOOR),
            init: InitStrategy::Uniform,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        if !(self.epsilon >= T::zero()) || !(self.variance_floor > T::zero()) {
            return Err(Error::InvalidArgument(
                "epsilon must be non-negative and the variance floor positive".into(),
            ));
        }
        Ok(())
    }
}

/// Everything produced by one [`em_fit`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport<T> {
    pub params: RhlpParams<T>,
    /// Log-likelihood at the initial parameters and after every EM iteration.
    pub log_likelihood_trace: Vec<T>,
    pub log_likelihood: T,
    pub bic: T,
    /// Zero-based `argmax_k π_ik` per sample.
    pub labels: Vec<usize>,
    /// `Σ_k π_ik β_kᵀ r_i` per sample.
    pub denoised: Vec<T>,
    pub runtime_seconds: f64,
    pub converged: bool,
    pub em_iterations: usize,
    /// Set when two components ended with numerically identical parameters.
    pub degenerate_components: bool,
    pub seed: u64,
}

/// `log π_ik + log N(x_i; β_kᵀ r_i, σ²_k)` for every sample and component,
/// accumulated into `joint`, which holds `log π` on entry.
fn log_joint<T: Real>(
    params: &RhlpParams<T>,
    x: &[T],
    regression_design: &Array2<T>,
    mut joint: Array2<T>,
) -> Array2<T> {
    let k = params.k();
    let d = regression_design.ncols();
    let half = T::lit(0.5);
    let ln_two_pi = (T::lit(2.0) * T::PI()).ln();
    let consts: Vec<(T, T)> = params
        .components
        .iter()
        .map(|c| (-half * (ln_two_pi + c.sigma2.ln()), half / c.sigma2))
        .collect();
    let r = regression_design.as_standard_layout();
    let rs = r.as_slice().expect("standard layout");
    let js = joint.as_slice_mut().expect("standard layout");
    for ((row, ri), &xi) in js.chunks_exact_mut(k).zip(rs.chunks_exact(d)).zip(x) {
        for ((slot, comp), &(c0, c1)) in row.iter_mut().zip(&params.components).zip(&consts) {
            let mean = ri
                .iter()
                .zip(comp.beta.iter())
                .fold(T::zero(), |acc, (&a, &b)| acc + a * b);
            let resid = xi - mean;
            *slot = *slot + c0 - c1 * resid * resid;
        }
    }
    joint
}

/// Normalizes each row of `joint` in log space; returns posteriors and the
/// summed per-row log normalizers (the log-likelihood).
fn normalize_rows<T: Real>(mut joint: Array2<T>) -> (Array2<T>, T) {
    let k = joint.ncols();
    let mut ll = T::zero();
    for row in joint
        .as_slice_mut()
        .expect("standard layout")
        .chunks_exact_mut(k)
    {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for slot in row.iter_mut() {
            *slot = if *slot == max {
                T::one()
            } else {
                (*slot - max).exp()
            };
            sum = sum + *slot;
        }
        ll = ll + max + sum.ln();
        for slot in row.iter_mut() {
            *slot = *slot / sum;
        }
    }
    (joint, ll)
}

/// `L(θ; x) = Σ_i log Σ_k π_ik N(x_i; β_kᵀ r_i, σ²_k)`.
pub fn mixture_log_likelihood<T: Real>(params: &RhlpParams<T>, signal: &Signal<T>) -> T {
    let r = design_matrix(signal.t(), params.p());
    let v = design_matrix(signal.t(), params.q());
    normalize_rows(log_joint(
        params,
        signal.x(),
        &r,
        log_proportions(params.logistic.weights(), &v),
    ))
    .1
}

/// Posterior probabilities `τ_ik ∝ π_ik N(x_i; β_kᵀ r_i, σ²_k)`.
pub fn e_step<T: Real>(params: &RhlpParams<T>, signal: &Signal<T>) -> Posteriors<T> {
    let r = design_matrix(signal.t(), params.p());
    let v = design_matrix(signal.t(), params.q());
    Posteriors(
        normalize_rows(log_joint(
            params,
            signal.x(),
            &r,
            log_proportions(params.logistic.weights(), &v),
        ))
        .0,
    )
}

fn m_step_with_design<T: Real>(
    tau: &Array2<T>,
    x: ArrayView1<'_, T>,
    design: &Array2<T>,
    floor: T,
    iteration: usize,
) -> Result<Vec<GaussianComponent<T>>> {
    let threshold = T::lit(EMPTY_COMPONENT_MASS);
    let (n, d) = design.dim();
    let mut cols = Vec::with_capacity(n * d);
    let mut rhs = Vec::with_capacity(n);
    let mut sqrt_w = Vec::with_capacity(n);
    tau.columns()
        .into_iter()
        .enumerate()
        .map(|(k, w)| {
            let mass = w.sum();
            if !(mass >= threshold) {
                return Err(Error::EmptyComponent {
                    component: k,
                    iteration,
                });
            }
            // QR of the √w-scaled design; its residual sum of squares is the
            // weighted SSE at the new coefficients
            sqrt_w.clear();
            sqrt_w.extend(w.iter().map(|&wi| wi.sqrt()));
            cols.clear();
            rhs.clear();
            for j in 0..d {
                cols.extend(design.column(j).iter().zip(&sqrt_w).map(|(&v, &sw)| v * sw));
            }
            rhs.extend(x.iter().zip(&sqrt_w).map(|(&xi, &sw)| xi * sw));
            let (beta, wss) = householder_least_squares(&mut cols, &mut rhs, n, d)?;
            let sigma2 = (wss / mass).max(floor);
            Ok(GaussianComponent::new(Array1::from(beta), sigma2))
        })
        .collect()
}

/// Weighted least squares per component followed by the weighted residual
/// variance computed with the new coefficients.
pub fn m_step_regression<T: Real>(
    tau: &Posteriors<T>,
    signal: &Signal<T>,
    p: usize,
    variance_floor: T,
) -> Result<Vec<GaussianComponent<T>>> {
    let design = design_matrix(signal.t(), p);
    m_step_with_design(
        tau.matrix(),
        ArrayView1::from(signal.x()),
        &design,
        variance_floor,
        0,
    )
}

/// Mean curve `x̂_i = Σ_k π_ik(w) β_kᵀ r_i`.
pub fn denoise<T: Real>(params: &RhlpParams<T>, t: &[T]) -> Vec<T> {
    let v = design_matrix(t, params.q());
    let pi = proportions_matrix(params.logistic.weights(), &v);
    t.iter()
        .enumerate()
        .map(|(i, &ti)| {
            params
                .components
                .iter()
                .enumerate()
                .map(|(k, c)| pi[[i, k]] * c.mean_at(ti))
                .sum()
        })
        .collect()
}

fn argmax_rows<T: Real>(m: &Array2<T>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Zero-based `argmax_k π_ik(w)`; ties go to the smallest index.
pub fn hard_labels<T: Real>(params: &RhlpParams<T>, t: &[T]) -> Vec<usize> {
    let v = design_matrix(t, params.q());
    argmax_rows(&log_proportions(params.logistic.weights(), &v))
}

/// Free parameters of a `(K, p, q)` model: `K(p+q+3) − (q+1)`.
pub fn parameter_count(k: usize, p: usize, q: usize) -> usize {
    k * (p + q + 3) - (q + 1)
}

/// `L − ν log(n) / 2`.
pub fn bic<T: Real>(params: &RhlpParams<T>, log_likelihood: T, n: usize) -> T {
    let nu = T::count(parameter_count(params.k(), params.p(), params.q()));
    log_likelihood - nu * T::count(n).ln() / T::lit(2.0)
}

fn components_collapsed<T: Real>(components: &[GaussianComponent<T>]) -> bool {
    let tol = T::lit(1e-6);
    let close = |a: T, b: T| (a - b).abs() <= tol * (T::one() + a.abs().max(b.abs()));
    components.iter().enumerate().any(|(i, a)| {
        components[i + 1..].iter().any(|b| {
            close(a.sigma2, b.sigma2)
                && a.beta.iter().zip(b.beta.iter()).all(|(&x, &y)| close(x, y))
        })
    })
}

fn initial_params<T: Real>(
    signal: &Signal<T>,
    partition: &Partition,
    config: &EmConfig<T>,
) -> Result<RhlpParams<T>> {
    let components = partition
        .ranges()
        .map(|r| {
            let design = design_matrix(&signal.t()[r.clone()], config.p);
            let beta = least_squares(design.view(), ArrayView1::from(&signal.x()[r]))?;
            Ok(GaussianComponent::new(beta, T::one()))
        })
        .collect::<Result<Vec<_>>>()?;
    RhlpParams::new(LogisticProcess::zeros(config.k, config.q), components)
}

fn jittered_partition<R: Rng>(base: &Partition, min_len: usize, rng: &mut R) -> Option<Partition> {
    let n = base.n();
    let k = base.segments();
    let radius = (n / (2 * k)).max(1) as i64;
    for _ in 0..1000 {
        let mut gamma: Vec<usize> = base.gamma().to_vec();
        for g in gamma.iter_mut().take(k).skip(1) {
            let shifted = *g as i64 + rng.random_range(-radius..=radius);
            *g = shifted.clamp(1, n as i64 - 1) as usize;
        }
        gamma[1..k].sort_unstable();
        if let Ok(p) = Partition::new(gamma, n, min_len) {
            return Some(p);
        }
    }
    None
}

struct EmRun<T> {
    params: RhlpParams<T>,
    trace: Vec<T>,
    converged: bool,
    iterations: usize,
}

fn run_em<T: Real>(
    signal: &Signal<T>,
    init: RhlpParams<T>,
    config: &EmConfig<T>,
) -> Result<EmRun<T>> {
    let x = signal.x();
    let r = design_matrix(signal.t(), config.p);
    let v = design_matrix(signal.t(), config.q);
    let xv = ArrayView1::from(x);

    let mut params = init;
    let mut softmax = softmax_pair(params.logistic.weights(), &v);
    let (mut tau, mut ll) = normalize_rows(log_joint(&params, x, &r, softmax.0.clone()));
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iter {
        iterations += 1;
        let components = m_step_with_design(&tau, xv, &r, config.variance_floor, iterations)?;
        let (irls, next_softmax) =
            solve_with_covariates(&params.logistic, softmax, &tau, &v, &config.irls);
        softmax = next_softmax;
        params = RhlpParams {
            logistic: irls.process,
            components,
        };
        let (next_tau, next_ll) = normalize_rows(log_joint(&params, x, &r, softmax.0.clone()));
        trace.push(next_ll);
        let increment = next_ll - ll;
        tau = next_tau;
        ll = next_ll;
        if increment < config.epsilon {
            converged = true;
            break;
        }
    }
    Ok(EmRun {
        params,
        trace,
        converged,
        iterations,
    })
}

/// Fits a `(K, p, q)` model by EM.
///
/// `seed` only matters for [`InitStrategy::Randomized`].
pub fn em_fit<T: Real>(
    signal: &Signal<T>,
    config: &EmConfig<T>,
    seed: u64,
) -> Result<FitReport<T>> {
    config.validate()?;
    let start = Instant::now();
    let n = signal.len();
    let min_len = config.p + 1;
    let uniform = Partition::uniform(n, config.k, min_len)?;

    let mut inits = vec![uniform.clone()];
    if let InitStrategy::Randomized { starts } = config.init {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..starts {
            if let Some(p) = jittered_partition(&uniform, min_len, &mut rng) {
                inits.push(p);
            }
        }
    }

    let mut best: Option<EmRun<T>> = None;
    let mut first_err = None;
    for init in &inits {
        let run = initial_params(signal, init, config).and_then(|p| run_em(signal, p, config));
        match run {
            Ok(run) => {
                let better = best
                    .as_ref()
                    .is_none_or(|b| run.trace.last() > b.trace.last());
                if better {
                    best = Some(run);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let Some(run) = best else {
        return Err(first_err.expect("no run without an error"));
    };

    let ll = *run.trace.last().expect("trace has the initial value");
    let labels = hard_labels(&run.params, signal.t());
    let denoised = denoise(&run.params, signal.t());
    let bic_value = bic(&run.params, ll, n);
    let degenerate = components_collapsed(&run.params.components);
    Ok(FitReport {
        log_likelihood: ll,
        bic: bic_value,
        labels,
        denoised,
        runtime_seconds: start.elapsed().as_secs_f64(),
        converged: run.converged,
        em_iterations: run.iterations,
        degenerate_components: degenerate,
        log_likelihood_trace: run.trace,
        params: run.params,
        seed,
    })
}
