//! Polynomial bases, (weighted) least squares and Gaussian log-densities.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Real;

/// Default lower bound applied to every variance estimate (units of x²).
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-8;

/// A univariate time series: strictly increasing sample times and their values.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal<T> {
    t: Vec<T>,
    x: Vec<T>,
}

impl<T: Real> Signal<T> {
    pub fn new(t: Vec<T>, x: Vec<T>) -> Result<Self> {
        if t.len() != x.len() {
            return Err(Error::LengthMismatch {
                times: t.len(),
                values: x.len(),
            });
        }
        if t.is_empty() {
            return Err(Error::EmptySignal);
        }
        for (i, (ti, xi)) in t.iter().zip(&x).enumerate() {
            if !ti.is_finite() || !xi.is_finite() {
                return Err(Error::NonFiniteValue { index: i });
            }
            if i > 0 && !(*ti > t[i - 1]) {
                return Err(Error::NonMonotonicTime { index: i });
            }
        }
        Ok(Self { t, x })
    }

    /// Samples `values` at `t_i = i·Δt`, `i = 1..n`, with `Δt = span / n`.
    pub fn uniform(span: T, values: Vec<T>) -> Result<Self> {
        let t = uniform_times(span, values.len());
        Self::new(t, values)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn t(&self) -> &[T] {
        &self.t
    }

    pub fn x(&self) -> &[T] {
        &self.x
    }

    /// Affinely maps the time axis onto `[lo, hi]`.
    pub fn rescale_time(&self, lo: T, hi: T) -> Result<Self> {
        let n = self.len();
        if n < 2 {
            return Err(Error::InvalidArgument(
                "time rescaling needs at least two samples".into(),
            ));
        }
        let (t0, t1) = (self.t[0], self.t[n - 1]);
        let scale = (hi - lo) / (t1 - t0);
        let t = self.t.iter().map(|&ti| lo + (ti - t0) * scale).collect();
        Self::new(t, self.x.clone())
    }
}

/// Grid `t_i = i·span/n` for `i = 1..=n`.
pub fn uniform_times<T: Real>(span: T, n: usize) -> Vec<T> {
    let dt = span / T::count(n.max(1));
    (1..=n).map(|i| T::count(i) * dt).collect()
}

/// Polynomial basis `(1, t, …, t^p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolyBasis {
    pub degree: usize,
}

impl PolyBasis {
    pub fn new(degree: usize) -> Self {
        Self { degree }
    }

    pub fn dim(&self) -> usize {
        self.degree + 1
    }

    pub fn expand<T: Real>(&self, t: T) -> Array1<T> {
        polynomial_basis(t, self.degree)
    }

    /// Writes the expansion of `t` into `out` (length `degree + 1`).
    pub fn fill<T: Real>(&self, t: T, out: &mut [T]) {
        let mut v = T::one();
        for slot in out.iter_mut().take(self.dim()) {
            *slot = v;
            v = v * t;
        }
    }
}

pub fn polynomial_basis<T: Real>(t: T, p: usize) -> Array1<T> {
    let mut out = Array1::zeros(p + 1);
    PolyBasis::new(p).fill(t, out.as_slice_mut().expect("contiguous"));
    out
}

/// `n × (p+1)` matrix whose row `i` is `polynomial_basis(t_i, p)`.
pub fn design_matrix<T: Real>(t: &[T], p: usize) -> Array2<T> {
    let basis = PolyBasis::new(p);
    let mut m = Array2::zeros((t.len(), p + 1));
    for (mut row, &ti) in m.rows_mut().into_iter().zip(t) {
        basis.fill(ti, row.as_slice_mut().expect("row-major"));
    }
    m
}

/// `argmin_β Σ w_i (x_i − βᵀr_i)²`, solved by QR of the `√w`-scaled design.
pub fn weighted_least_squares<T: Real>(
    design: ArrayView2<'_, T>,
    x: ArrayView1<'_, T>,
    w: ArrayView1<'_, T>,
) -> Result<Array1<T>> {
    let n = design.nrows();
    if x.len() != n || w.len() != n {
        return Err(Error::InvalidArgument(format!(
            "weighted_least_squares: {} rows, {} values, {} weights",
            n,
            x.len(),
            w.len()
        )));
    }
    if w.iter().any(|&wi| !(wi >= T::zero()) || !wi.is_finite()) {
        return Err(Error::InvalidArgument(
            "weights must be finite and non-negative".into(),
        ));
    }
    if !(w.sum() > T::zero()) {
        return Err(Error::RankDeficient {
            rank: 0,
            required: design.ncols(),
        });
    }
    let sw = w.mapv(|wi| wi.sqrt());
    let mut a = design.to_owned();
    for (mut row, &s) in a.rows_mut().into_iter().zip(sw.iter()) {
        row.mapv_inplace(|v| v * s);
    }
    let b = &x * &sw;
    linalg::least_squares(a.view(), b.view())
}

/// Ordinary least squares (unit weights).
pub fn least_squares<T: Real>(
    design: ArrayView2<'_, T>,
    x: ArrayView1<'_, T>,
) -> Result<Array1<T>> {
    let (n, d) = design.dim();
    if x.len() != n {
        return Err(Error::InvalidArgument(format!(
            "least_squares: {n} rows but {} values",
            x.len()
        )));
    }
    if n < d {
        return Err(Error::RankDeficient {
            rank: n,
            required: d,
        });
    }
    linalg::least_squares(design, x)
}

/// `log N(x; mean, σ²)`.
#[inline]
pub fn gaussian_log_density<T: Real>(x: T, mean: T, sigma2: T) -> T {
    let r = x - mean;
    let two_pi = T::lit(2.0) * T::PI();
    -T::lit(0.5) * (two_pi.ln() + sigma2.ln() + r * r / sigma2)
}

/// One polynomial regression component: coefficients and noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent<T> {
    pub beta: Array1<T>,
    pub sigma2: T,
}

impl<T: Real> GaussianComponent<T> {
    pub fn new(beta: Array1<T>, sigma2: T) -> Self {
        Self { beta, sigma2 }
    }

    pub fn degree(&self) -> usize {
        self.beta.len().saturating_sub(1)
    }

    /// Evaluates `βᵀ r(t)` by Horner's rule.
    pub fn mean_at(&self, t: T) -> T {
        self.beta
            .iter()
            .rev()
            .fold(T::zero(), |acc, &b| acc * t + b)
    }

    pub fn log_density(&self, t: T, x: T) -> T {
        gaussian_log_density(x, self.mean_at(t), self.sigma2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Solves `(TᵀWT)β = TᵀWx` by Gaussian elimination with partial pivoting.
    fn normal_equations_oracle(t: &[f64], x: &[f64], w: &[f64], p: usize) -> Vec<f64> {
        let d = p + 1;
        let mut a = vec![vec![0.0; d + 1]; d];
        for i in 0..t.len() {
            let r: Vec<f64> = (0..d).map(|j| t[i].powi(j as i32)).collect();
            for j in 0..d {
                for k in 0..d {
                    a[j][k] += w[i] * r[j] * r[k];
                }
                a[j][d] += w[i] * r[j] * x[i];
            }
        }
        for col in 0..d {
            let piv = (col..d)
                .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
                .unwrap();
            a.swap(col, piv);
            for row in 0..d {
                if row != col {
                    let f = a[row][col] / a[col][col];
                    for k in col..=d {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
        (0..d).map(|j| a[j][d] / a[j][j]).collect()
    }

    #[test]
    fn basis_examples() {
        assert_eq!(polynomial_basis(0.0, 2), array![1.0, 0.0, 0.0]);
        assert_eq!(polynomial_basis(2.0, 1), array![1.0, 2.0]);
        assert_eq!(polynomial_basis(0.5, 3), array![1.0, 0.5, 0.25, 0.125]);
    }

    #[test]
    fn design_matrix_examples() {
        assert_eq!(
            design_matrix(&[0.0, 1.0], 1),
            array![[1.0, 0.0], [1.0, 1.0]]
        );
        assert_eq!(
            design_matrix(&[0.0, 1.0, 2.0], 0),
            array![[1.0], [1.0], [1.0]]
        );
        let t = [0.0, 0.5, 1.0];
        let m = design_matrix(&t, 2);
        for (i, &ti) in t.iter().enumerate() {
            assert_eq!(m.row(i), polynomial_basis(ti, 2));
        }
    }

    #[test]
    fn wls_noiseless_line() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let x: Array1<f64> = t.iter().map(|&ti| 3.0 + 2.0 * ti).collect();
        let d = design_matrix(&t, 1);
        let beta = weighted_least_squares(d.view(), x.view(), Array1::ones(4).view()).unwrap();
        assert!((beta[0] - 3.0).abs() < 1e-12 && (beta[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn wls_zero_weights_exclude_samples() {
        let t: Vec<f64> = (0..8).map(|i| i as f64 * 0.4).collect();
        let x = array![1.0, 2.5, 0.3, 4.0, 3.2, 7.7, 1.1, 0.9];
        let w = array![0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0];
        let full = weighted_least_squares(design_matrix(&t, 1).view(), x.view(), w.view()).unwrap();
        let sub = least_squares(
            design_matrix(&t[2..6], 1).view(),
            x.slice(ndarray::s![2..6]),
        )
        .unwrap();
        for j in 0..2 {
            assert!((full[j] - sub[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn wls_matches_normal_equations_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in 0..=3 {
            let t: Vec<f64> = (0..10)
                .map(|i| i as f64 * 0.3 + rng.random::<f64>() * 0.1)
                .collect();
            let x: Vec<f64> = (0..10).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
            let w: Vec<f64> = (0..10).map(|_| rng.random::<f64>() + 0.05).collect();
            let beta = weighted_least_squares(
                design_matrix(&t, p).view(),
                ArrayView1::from(&x),
                ArrayView1::from(&w),
            )
            .unwrap();
            let oracle = normal_equations_oracle(&t, &x, &w, p);
            for j in 0..=p {
                let rel = (beta[j] - oracle[j]).abs() / oracle[j].abs().max(1.0);
                assert!(rel < 1e-9, "p={p} j={j}: {} vs {}", beta[j], oracle[j]);
            }
        }
    }

    #[test]
    fn wls_rejects_all_zero_weights() {
        let d = design_matrix(&[0.0, 1.0], 1);
        let r = weighted_least_squares(d.view(), array![1.0, 2.0].view(), array![0.0, 0.0].view());
        assert!(matches!(r, Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn gaussian_log_density_examples() {
        let c = -0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((gaussian_log_density(0.0, 0.0, 1.0) - c).abs() < 1e-15);
        assert!((gaussian_log_density(1.0, 0.0, 1.0) - (c - 0.5)).abs() < 1e-15);
        let hand = -0.5 * ((2.0 * std::f64::consts::PI).ln() + 4.0f64.ln() + 0.25);
        assert!((gaussian_log_density(2.0, 1.0, 4.0) - hand).abs() < 1e-15);
    }

    #[test]
    fn gaussian_density_integrates_to_one() {
        for &(mean, sigma2) in &[(0.0, 1.0), (3.0, 0.25), (-10.0, 40.0)] {
            let sd: f64 = f64::sqrt(sigma2);
            let (lo, hi) = (mean - 8.0 * sd, mean + 8.0 * sd);
            // composite Simpson
            let m = 4000;
            let h = (hi - lo) / m as f64;
            let f = |x: f64| gaussian_log_density(x, mean, sigma2).exp();
            let mut s = f(lo) + f(hi);
            for i in 1..m {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * f(lo + i as f64 * h);
            }
            assert!((s * h / 3.0 - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn component_mean_uses_horner() {
        let c = GaussianComponent::new(array![735.0, -1320.0, 1000.0], 4.0);
        assert_eq!(c.mean_at(0.0), 735.0);
        assert!((c.mean_at(0.6) - 303.0_f64).abs() < 1e-9);
    }

    #[test]
    fn signal_validation() {
        assert!(matches!(
            Signal::new(vec![0.0, 0.0], vec![1.0, 2.0]),
            Err(Error::NonMonotonicTime { index: 1 })
        ));
        assert!(matches!(
            Signal::new(vec![0.0, 1.0], vec![1.0, f64::NAN]),
            Err(Error::NonFiniteValue { index: 1 })
        ));
        assert!(matches!(
            Signal::<f64>::new(vec![], vec![]),
            Err(Error::EmptySignal)
        ));
        assert!(matches!(
            Signal::new(vec![0.0], vec![1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
        let s = Signal::uniform(5.0, vec![0.0; 10]).unwrap();
        assert!((s.t()[9] - 5.0_f64).abs() < 1e-12 && (s.t()[0] - 0.5_f64).abs() < 1e-12);
        let r = s.rescale_time(0.0, 1.0).unwrap();
        assert_eq!(r.t()[0], 0.0);
        assert!((r.t()[9] - 1.0_f64).abs() < 1e-12);
    }

    #[test]
    fn single_precision_fit() {
        let t = [0.0f32, 1.0, 2.0];
        let x = array![1.0f32, 3.0, 5.0];
        let beta = least_squares(design_matrix(&t, 1).view(), x.view()).unwrap();
        assert!((beta[1] - 2.0).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn wls_unit_weights_equal_ols(xs in proptest::collection::vec(-50.0f64..50.0, 6..20), p in 0usize..3) {
            let t: Vec<f64> = (0..xs.len()).map(|i| i as f64 * 0.25).collect();
            let d = design_matrix(&t, p);
            let x = ArrayView1::from(&xs);
            let a = weighted_least_squares(d.view(), x, Array1::ones(xs.len()).view()).unwrap();
            let oracle = normal_equations_oracle(&t, &xs, &vec![1.0; xs.len()], p);
            for j in 0..=p {
                prop_assert!((a[j] - oracle[j]).abs() <= 1e-9 * oracle[j].abs().max(1.0));
            }
        }

        #[test]
        fn wls_invariant_to_weight_scaling(
            xs in proptest::collection::vec(-5.0f64..5.0, 8),
            ws in proptest::collection::vec(0.1f64..3.0, 8),
            scale in 1e-3f64..1e3,
        ) {
            let t: Vec<f64> = (0..8).map(|i| i as f64 * 0.5).collect();
            let d = design_matrix(&t, 2);
            let w = Array1::from(ws);
            let a = weighted_least_squares(d.view(), ArrayView1::from(&xs), w.view()).unwrap();
            let b = weighted_least_squares(d.view(), ArrayView1::from(&xs), (&w * scale).view()).unwrap();
            for j in 0..3 {
                prop_assert!((a[j] - b[j]).abs() <= 1e-12 * a[j].abs().max(1.0));
            }
        }

        #[test]
        fn design_rows_equal_basis(ts in proptest::collection::vec(-3.0f64..3.0, 1..12), p in 0usize..5) {
            let m = design_matrix(&ts, p);
            for (i, &ti) in ts.iter().enumerate() {
                prop_assert_eq!(m.row(i).to_owned(), polynomial_basis(ti, p));
            }
        }
    }
}
