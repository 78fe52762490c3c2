//! Small dense solvers: Givens QR least squares (batch or one row at a
//! time) and Cholesky.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Real;

fn rank_tolerance<T: Real>(rows: usize, cols: usize, max_diag: T) -> T {
    T::epsilon() * T::count(rows.max(cols)) * max_diag
}

/// Solves `min ‖A β − b‖₂` by a Givens QR factorization of `A`.
///
/// Fails with [`Error::RankDeficient`] when a diagonal entry of `R` falls
/// below `eps · max(m, n) · max|R_jj|`.
pub fn least_squares<T: Real>(a: ArrayView2<'_, T>, b: ArrayView1<'_, T>) -> Result<Array1<T>> {
    let (m, n) = a.dim();
    assert_eq!(m, b.len(), "least_squares: row count mismatch");
    let mut acc = GivensLs::new(n);
    let mut row = vec![T::zero(); n];
    for (ai, &bi) in a.rows().into_iter().zip(b.iter()) {
        for (slot, &v) in row.iter_mut().zip(ai.iter()) {
            *slot = v;
        }
        acc.push(&mut row, bi);
    }
    acc.solve().map(Array1::from)
}

/// Dot product with four independent accumulators.
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] = acc[l] + x[l] * y[l];
        }
    }
    let tail = ra.iter().zip(rb).fold(T::zero(), |s, (&x, &y)| s + x * y);
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y ← y + a x`.
pub(crate) fn axpy<T: Real>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * xi;
    }
}

/// Householder least squares on a column-major `m × n` buffer.
///
/// Both `cols` and `rhs` are overwritten. Returns the coefficients and the
/// residual sum of squares `‖A β − b‖²`.
pub fn householder_least_squares<T: Real>(
    cols: &mut [T],
    rhs: &mut [T],
    m: usize,
    n: usize,
) -> Result<(Vec<T>, T)> {
    assert_eq!(cols.len(), m * n, "householder_least_squares: buffer size");
    assert_eq!(rhs.len(), m, "householder_least_squares: rhs length");
    if m < n {
        return Err(Error::RankDeficient {
            rank: m,
            required: n,
        });
    }
    let mut diag = vec![T::zero(); n];
    for j in 0..n {
        let (done, rest) = cols.split_at_mut((j + 1) * m);
        let v = &mut done[j * m + j..(j + 1) * m];
        let norm = dot(v, v).sqrt();
        if norm == T::zero() {
            continue;
        }
        let alpha = if v[0] > T::zero() { -norm } else { norm };
        // ‖v‖² after v₀ ← v₀ − α, written so that no cancellation occurs
        let vnorm2 = T::lit(2.0) * (norm * norm - alpha * v[0]);
        v[0] = v[0] - alpha;
        diag[j] = alpha;
        if !(vnorm2 > T::zero()) {
            continue;
        }
        let scale = T::lit(2.0) / vnorm2;
        for c in rest.chunks_exact_mut(m) {
            let col = &mut c[j..];
            let f = scale * dot(v, col);
            axpy(-f, v, col);
        }
        let y = &mut rhs[j..];
        let f = scale * dot(v, y);
        axpy(-f, v, y);
    }
    let max_diag = diag.iter().fold(T::zero(), |acc, d| acc.max(d.abs()));
    let tol = rank_tolerance(m, n, max_diag);
    let rank = diag.iter().filter(|d| d.abs() > tol).count();
    if rank < n || max_diag == T::zero() {
        return Err(Error::RankDeficient { rank, required: n });
    }
    let mut beta = vec![T::zero(); n];
    for j in (0..n).rev() {
        let mut acc = rhs[j];
        for c in (j + 1)..n {
            acc = acc - cols[c * m + j] * beta[c];
        }
        beta[j] = acc / diag[j];
    }
    let rss = rhs[n..].iter().fold(T::zero(), |acc, &r| acc + r * r);
    Ok((beta, rss))
}

/// Cholesky factorization of a symmetric positive definite matrix.
/// Returns `None` if a pivot is not strictly positive.
pub fn cholesky<T: Real>(a: ArrayView2<'_, T>) -> Option<Array2<T>> {
    let n = a.nrows();
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d = d - l[[j, k]] * l[[j, k]];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[[j, j]] = djj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s = s - l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / djj;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` given the lower Cholesky factor.
pub fn cholesky_solve<T: Real>(l: ArrayView2<'_, T>, b: ArrayView1<'_, T>) -> Array1<T> {
    let n = l.nrows();
    let mut z = b.to_owned();
    for i in 0..n {
        let mut s = z[i];
        for k in 0..i {
            s = s - l[[i, k]] * z[k];
        }
        z[i] = s / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in (i + 1)..n {
            s = s - l[[k, i]] * z[k];
        }
        z[i] = s / l[[i, i]];
    }
    z
}

/// Least-squares accumulator fed one observation at a time.
///
/// Keeps the triangular factor of the design and the rotated response so the
/// residual sum of squares of the current fit is available after every row.
#[derive(Debug, Clone)]
pub struct GivensLs<T> {
    dim: usize,
    r: Vec<T>,
    qtb: Vec<T>,
    rss: T,
    rows: usize,
}

impl<T: Real> GivensLs<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            r: vec![T::zero(); dim * dim],
            qtb: vec![T::zero(); dim],
            rss: T::zero(),
            rows: 0,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Residual sum of squares of the least-squares fit to the rows seen so far.
    pub fn rss(&self) -> T {
        self.rss
    }

    /// Adds the observation `(row, y)`; `row` is overwritten as scratch.
    pub fn push(&mut self, row: &mut [T], mut y: T) {
        debug_assert_eq!(row.len(), self.dim);
        let d = self.dim;
        for j in 0..d {
            let aj = row[j];
            if aj == T::zero() {
                continue;
            }
            let rjj = self.r[j * d + j];
            let mut h = (rjj * rjj + aj * aj).sqrt();
            if !(h > T::min_positive_value()) || !h.is_finite() {
                // squares under- or overflowed
                h = rjj.hypot(aj);
            }
            let c = rjj / h;
            let s = aj / h;
            self.r[j * d + j] = h;
            for k in (j + 1)..d {
                let rjk = self.r[j * d + k];
                let ak = row[k];
                self.r[j * d + k] = c * rjk + s * ak;
                row[k] = c * ak - s * rjk;
            }
            let qj = self.qtb[j];
            self.qtb[j] = c * qj + s * y;
            y = c * y - s * qj;
        }
        self.rss = self.rss + y * y;
        self.rows += 1;
    }

    /// Back-substitutes `R β = Qᵀb`.
    pub fn solve(&self) -> Result<Vec<T>> {
        let d = self.dim;
        let max_diag = (0..d).fold(T::zero(), |m, j| m.max(self.r[j * d + j].abs()));
        let tol = rank_tolerance(self.rows, d, max_diag);
        let rank = (0..d).filter(|&j| self.r[j * d + j].abs() > tol).count();
        if rank < d || max_diag == T::zero() {
            return Err(Error::RankDeficient { rank, required: d });
        }
        let mut beta = vec![T::zero(); d];
        for j in (0..d).rev() {
            let mut acc = self.qtb[j];
            for c in (j + 1)..d {
                acc = acc - self.r[j * d + c] * beta[c];
            }
            beta[j] = acc / self.r[j * d + j];
        }
        Ok(beta)
    }
}
