use ndarray::{Array1, Array2, Zip};

use super::{LogisticProcess, Posteriors, Proportions};
use crate::linalg::{cholesky, cholesky_solve};
use crate::regression::design_matrix;
use crate::scalar::Real;

/// Convergence settings for the Newton (IRLS) solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsOptions<T> {
    /// Stop once an accepted step raises `Q_1` by no more than this.
    pub delta: T,
    pub max_iter: usize,
    /// Maximum number of step halvings before giving up on a direction.
    pub max_halvings: usize,
}

impl<T: Real> Default for IrlsOptions<T> {
    fn default() -> Self {
        Self {
            delta: T::lit(1e-6),
            max_iter: 50,
            max_halvings: 30,
        }
    }
}

/// Row-wise softmax of `V Wᵀ`, returned both in log space and as
/// probabilities. One exponential per entry serves both outputs.
pub(crate) fn softmax_pair<T: Real>(
    weights: &Array2<T>,
    covariates: &Array2<T>,
) -> (Array2<T>, Array2<T>) {
    let (n, d) = covariates.dim();
    let k = weights.nrows();
    let w = weights.as_standard_layout();
    let ws = w.as_slice().expect("standard layout");
    let v = covariates.as_standard_layout();
    let vs = v.as_slice().expect("standard layout");
    let mut logs = vec![T::zero(); n * k];
    let mut probs = vec![T::zero(); n * k];
    let rows = vs
        .chunks_exact(d)
        .zip(logs.chunks_exact_mut(k))
        .zip(probs.chunks_exact_mut(k));
    for ((vi, lrow), prow) in rows {
        // the last weight vector is pinned to zero
        let mut max = T::zero();
        for (slot, wk) in lrow[..k - 1].iter_mut().zip(ws.chunks_exact(d)) {
            let s = vi
                .iter()
                .zip(wk)
                .fold(T::zero(), |acc, (&a, &b)| acc + a * b);
            *slot = s;
            max = max.max(s);
        }
        let mut sum = T::zero();
        for (e, &s) in prow.iter_mut().zip(lrow.iter()) {
            *e = if s == max { T::one() } else { (s - max).exp() };
            sum = sum + *e;
        }
        let lse = max + sum.ln();
        let inv = sum.recip();
        for (l, e) in lrow.iter_mut().zip(prow.iter_mut()) {
            *l = *l - lse;
            *e = *e * inv;
        }
    }
    (
        Array2::from_shape_vec((n, k), logs).expect("shape"),
        Array2::from_shape_vec((n, k), probs).expect("shape"),
    )
}

/// Row-wise log-softmax of `V Wᵀ`.
pub(crate) fn log_proportions<T: Real>(weights: &Array2<T>, covariates: &Array2<T>) -> Array2<T> {
    let (n, d) = covariates.dim();
    let k = weights.nrows();
    let w = weights.as_standard_layout();
    let ws = w.as_slice().expect("standard layout");
    let v = covariates.as_standard_layout();
    let vs = v.as_slice().expect("standard layout");
    let mut out = vec![T::zero(); n * k];
    for (vi, row) in vs.chunks_exact(d).zip(out.chunks_exact_mut(k)) {
        let mut max = T::neg_infinity();
        for (slot, wk) in row.iter_mut().zip(ws.chunks_exact(d)) {
            let s = vi
                .iter()
                .zip(wk)
                .fold(T::zero(), |acc, (&a, &b)| acc + a * b);
            *slot = s;
            max = max.max(s);
        }
        let sum = row.iter().fold(T::zero(), |acc, &s| {
            acc + if s == max { T::one() } else { (s - max).exp() }
        });
        let lse = max + sum.ln();
        for slot in row.iter_mut() {
            *slot = *slot - lse;
        }
    }
    Array2::from_shape_vec((n, k), out).expect("shape")
}

pub(crate) fn proportions_matrix<T: Real>(
    weights: &Array2<T>,
    covariates: &Array2<T>,
) -> Array2<T> {
    let mut p = log_proportions(weights, covariates);
    p.mapv_inplace(T::exp);
    p
}

/// `π_ik(w)` at every time in `t`.
pub fn logistic_proportions<T: Real>(process: &LogisticProcess<T>, t: &[T]) -> Proportions<T> {
    let v = design_matrix(t, process.degree());
    Proportions(proportions_matrix(process.weights(), &v))
}

pub(crate) fn objective<T: Real>(tau: &Array2<T>, log_pi: &Array2<T>) -> T {
    let mut acc = T::zero();
    Zip::from(tau).and(log_pi).for_each(|&a, &b| {
        if a != T::zero() {
            acc = acc + a * b;
        }
    });
    acc
}

pub(crate) fn gradient<T: Real>(tau: &Array2<T>, pi: &Array2<T>, v: &Array2<T>) -> Array1<T> {
    derivatives(Some(tau), pi, v).0
}

pub(crate) fn hessian<T: Real>(pi: &Array2<T>, v: &Array2<T>) -> Array2<T> {
    derivatives(None, pi, v).1
}

/// Gradient (when `tau` is given) and Hessian of `Q_1` in a single pass.
pub(crate) fn derivatives<T: Real>(
    tau: Option<&Array2<T>>,
    pi: &Array2<T>,
    v: &Array2<T>,
) -> (Array1<T>, Array2<T>) {
    let k = pi.ncols();
    let k_free = k - 1;
    let d = v.ncols();
    let dim = k_free * d;
    // Each row contributes c_kl · v vᵀ with c_kl = −π_k(δ_kl − π_l). Only the
    // upper triangles of both factors are accumulated, then expanded.
    let pairs: Vec<(usize, usize)> = (0..k_free)
        .flat_map(|a| (a..k_free).map(move |b| (a, b)))
        .collect();
    let outer: Vec<(usize, usize)> = (0..d).flat_map(|a| (a..d).map(move |b| (a, b))).collect();
    let m = outer.len();
    let mut acc = vec![T::zero(); pairs.len() * m];
    let mut vv = vec![T::zero(); m];
    let mut g = vec![T::zero(); dim];
    let (pi, v) = (pi.as_standard_layout(), v.as_standard_layout());
    let tau = tau.map(|t| t.as_standard_layout());
    let ps = pi.as_slice().expect("standard layout");
    let vs = v.as_slice().expect("standard layout");
    for (i, (pii, vi)) in ps.chunks_exact(k).zip(vs.chunks_exact(d)).enumerate() {
        if let Some(tau) = &tau {
            let ti = &tau.as_slice().expect("standard layout")[i * k..(i + 1) * k];
            for ((block, &t), &p) in g.chunks_exact_mut(d).zip(ti).zip(pii) {
                let diff = t - p;
                for (gj, &vj) in block.iter_mut().zip(vi) {
                    *gj = *gj + diff * vj;
                }
            }
        }
        for (slot, &(a, b)) in vv.iter_mut().zip(&outer) {
            *slot = vi[a] * vi[b];
        }
        for (block, &(a, b)) in acc.chunks_exact_mut(m).zip(&pairs) {
            let c = if a == b {
                pii[a] * pii[a] - pii[a]
            } else {
                pii[a] * pii[b]
            };
            for (x, &y) in block.iter_mut().zip(&vv) {
                *x = *x + c * y;
            }
        }
    }
    let mut h = Array2::zeros((dim, dim));
    for (block, &(ka, kb)) in acc.chunks_exact(m).zip(&pairs) {
        for (&val, &(a, b)) in block.iter().zip(&outer) {
            let cells = [
                (ka * d + a, kb * d + b),
                (ka * d + b, kb * d + a),
                (kb * d + a, ka * d + b),
                (kb * d + b, ka * d + a),
            ];
            for (r, c) in cells {
                h[[r, c]] = val;
            }
        }
    }
    (Array1::from(g), h)
}

/// `Q_1(w) = Σ_i Σ_k τ_ik log π_ik(w)`.
pub fn irls_objective_q1<T: Real>(process: &LogisticProcess<T>, tau: &Posteriors<T>, t: &[T]) -> T {
    let v = design_matrix(t, process.degree());
    objective(tau.matrix(), &log_proportions(process.weights(), &v))
}

/// Stacked gradient blocks `g_k = Σ_i (τ_ik − π_ik) v_i`, `k = 1..K−1`.
pub fn irls_gradient<T: Real>(
    process: &LogisticProcess<T>,
    tau: &Posteriors<T>,
    t: &[T],
) -> Array1<T> {
    let v = design_matrix(t, process.degree());
    gradient(tau.matrix(), &proportions_matrix(process.weights(), &v), &v)
}

/// Exact Hessian of `Q_1`: blocks `H_kℓ = −Σ_i π_ik (δ_kℓ − π_iℓ) v_i v_iᵀ`.
pub fn irls_hessian<T: Real>(process: &LogisticProcess<T>, t: &[T]) -> Array2<T> {
    let v = design_matrix(t, process.degree());
    hessian(&proportions_matrix(process.weights(), &v), &v)
}

/// Outcome of [`irls_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct IrlsOutcome<T> {
    pub process: LogisticProcess<T>,
    /// `Q_1` at the start and after every accepted step.
    pub objective_trace: Vec<T>,
    pub iterations: usize,
    /// Number of steps whose Hessian needed ridge damping.
    pub damped_steps: usize,
}

/// Solves `(−H) x = g`, ridge-damping `−H` when it is not positive definite.
fn newton_direction<T: Real>(neg_h: &Array2<T>, g: &Array1<T>) -> (Array1<T>, bool) {
    if let Some(l) = cholesky(neg_h.view()) {
        return (cholesky_solve(l.view(), g.view()), false);
    }
    let dim = neg_h.nrows();
    let trace = (0..dim).map(|i| neg_h[[i, i]].abs()).sum::<T>();
    let scale = if trace > T::zero() {
        trace / T::count(dim)
    } else {
        T::one()
    };
    let mut lambda = T::lit(1e-6) * scale;
    loop {
        let mut damped = neg_h.clone();
        for i in 0..dim {
            damped[[i, i]] = damped[[i, i]] + lambda;
        }
        if let Some(l) = cholesky(damped.view()) {
            return (cholesky_solve(l.view(), g.view()), true);
        }
        lambda = lambda * T::lit(10.0);
        if !lambda.is_finite() {
            // gradient ascent as a last resort
            return (g.clone(), true);
        }
    }
}

/// Log proportions and proportions evaluated at the same weights.
pub(crate) type SoftmaxPair<T> = (Array2<T>, Array2<T>);

/// Newton solve on precomputed covariates. `start` must equal
/// `softmax_pair(init.weights(), v)`; the returned pair is evaluated at the
/// solution so callers need not recompute it.
pub(crate) fn solve_with_covariates<T: Real>(
    init: &LogisticProcess<T>,
    start: SoftmaxPair<T>,
    tau: &Array2<T>,
    v: &Array2<T>,
    options: &IrlsOptions<T>,
) -> (IrlsOutcome<T>, SoftmaxPair<T>) {
    let k = init.components();
    let q = init.degree();
    let mut free = init.free_params();
    let mut weights = init.weights().clone();
    let (mut log_pi, mut pi) = start;
    let mut q1 = objective(tau, &log_pi);
    let mut trace = vec![q1];
    let mut iterations = 0;
    let mut damped_steps = 0;

    if k < 2 {
        let outcome = IrlsOutcome {
            process: init.clone(),
            objective_trace: trace,
            iterations,
            damped_steps,
        };
        return (outcome, (log_pi, pi));
    }

    while iterations < options.max_iter {
        let (g, h) = derivatives(Some(tau), &pi, v);
        if g.iter().all(|&x| x == T::zero()) {
            break;
        }
        let neg_h = h.mapv(|x| -x);
        let (dir, damped) = newton_direction(&neg_h, &g);
        if damped {
            damped_steps += 1;
        }

        let mut step = T::one();
        let mut accepted = None;
        for _ in 0..=options.max_halvings {
            let cand_free = &free + &(&dir * step);
            let cand = LogisticProcess::from_free(k, q, cand_free.view());
            let (cand_log_pi, cand_pi) = softmax_pair(cand.weights(), v);
            let cand_q1 = objective(tau, &cand_log_pi);
            if cand_q1.is_finite() && cand_q1 >= q1 {
                accepted = Some((cand_free, cand, cand_log_pi, cand_pi, cand_q1));
                break;
            }
            step = step * T::lit(0.5);
        }
        let Some((new_free, new_process, new_log_pi, new_pi, new_q1)) = accepted else {
            break;
        };
        iterations += 1;
        let increment = new_q1 - q1;
        free = new_free;
        weights = new_process.weights().clone();
        log_pi = new_log_pi;
        pi = new_pi;
        q1 = new_q1;
        trace.push(q1);
        if increment <= options.delta {
            break;
        }
    }

    let outcome = IrlsOutcome {
        process: LogisticProcess { weights },
        objective_trace: trace,
        iterations,
        damped_steps,
    };
    (outcome, (log_pi, pi))
}

/// Maximizes `Q_1(w)` by Newton-Raphson from `init`.
///
/// Each full Newton step is halved (up to `max_halvings` times) until `Q_1`
/// does not decrease; a direction that never achieves that ends the solve.
/// A Hessian that is not negative definite is ridge-damped.
pub fn irls_solve<T: Real>(
    init: &LogisticProcess<T>,
    tau: &Posteriors<T>,
    t: &[T],
    options: &IrlsOptions<T>,
) -> IrlsOutcome<T> {
    let v = design_matrix(t, init.degree());
    let start = softmax_pair(init.weights(), &v);
    solve_with_covariates(init, start, tau.matrix(), &v, options).0
}
