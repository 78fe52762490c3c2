use rayon::prelude::*;

use super::{floored_cost, PiecewiseConfig};
use crate::error::Result;
use crate::linalg::GivensLs;
use crate::regression::{PolyBasis, Signal};
use crate::scalar::Real;

/// One-segment costs `C_1(a, b)` for `0 ≤ a < b ≤ n`.
///
/// Entries with `b − a` below the minimum segment length hold `+∞`.
#[derive(Debug, Clone)]
pub struct CostMatrix<T> {
    n: usize,
    min_len: usize,
    // row a holds b = a+1..=n at offset (b - a - 1)
    rows: Vec<Vec<T>>,
}

impl<T: Real> CostMatrix<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn min_len(&self) -> usize {
        self.min_len
    }

    /// `C_1(a, b)`, the cost of the segment covering samples `a..b`.
    #[inline]
    pub fn get(&self, a: usize, b: usize) -> T {
        debug_assert!(a < b && b <= self.n);
        self.rows[a][b - a - 1]
    }

    pub fn is_feasible(&self, a: usize, b: usize) -> bool {
        a < b && b <= self.n && b - a >= self.min_len
    }

    /// Number of finite entries.
    pub fn feasible_count(&self) -> usize {
        self.rows
            .iter()
            .map(|r| r.iter().filter(|v| v.is_finite()).count())
            .sum()
    }
}

/// Computes every feasible one-segment cost.
///
/// Each row `a` sweeps `b` forward and folds one sample at a time into a
/// Givens QR factor built on times shifted by `t_a`, so the residual sum of
/// squares of every segment `]a, b]` costs `O(p²)` beyond the previous one.
pub fn build_cost_matrix<T: Real>(
    signal: &Signal<T>,
    config: &PiecewiseConfig<T>,
) -> Result<CostMatrix<T>> {
    config.validate()?;
    let n = signal.len();
    let min_len = config.min_len();
    let basis = PolyBasis::new(config.degree);
    let floor = config.variance_floor;
    let (t, x) = (signal.t(), signal.x());

    let rows = (0..n)
        .into_par_iter()
        .map(|a| {
            let mut acc = GivensLs::new(basis.dim());
            let mut row = vec![T::zero(); basis.dim()];
            let origin = t[a];
            let mut out = Vec::with_capacity(n - a);
            for b in (a + 1)..=n {
                basis.fill(t[b - 1] - origin, &mut row);
                acc.push(&mut row, x[b - 1]);
                let len = b - a;
                out.push(if len >= min_len {
                    floored_cost(acc.rss(), len, floor).0
                } else {
                    T::infinity()
                });
            }
            out
        })
        .collect();

    Ok(CostMatrix { n, min_len, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::piecewise::segment_cost;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn three_samples_constant_model_has_six_entries() {
        let s = Signal::new(vec![0.0, 1.0, 2.0], vec![1.0, 4.0, 2.0]).unwrap();
        let cfg = PiecewiseConfig::new(0).with_min_segment_length(1);
        let m = build_cost_matrix(&s, &cfg).unwrap();
        assert_eq!(m.feasible_count(), 6);
        for (a, b) in [(0, 1), (1, 2), (2, 3), (0, 2), (1, 3), (0, 3)] {
            assert!(f64::is_finite(m.get(a, b)));
        }
    }

    #[test]
    fn infeasible_entries_are_infinite() {
        let s = Signal::uniform(1.0, vec![0.5, 1.0, 0.2, 0.8, 0.3]).unwrap();
        let m = build_cost_matrix(&s, &PiecewiseConfig::new(1)).unwrap();
        assert_eq!(m.get(0, 2), f64::INFINITY);
        assert!(m.get(0, 3).is_finite());
        assert!(!m.is_feasible(1, 3));
    }

    #[test]
    fn entries_match_direct_segment_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 60;
        let x: Vec<f64> = (0..n)
            .map(|i| (i as f64 * 0.2).sin() * 30.0 + rng.random::<f64>() * 4.0)
            .collect();
        let s = Signal::uniform(5.0, x).unwrap();
        for p in 0..=2 {
            let cfg = PiecewiseConfig::new(p);
            let m = build_cost_matrix(&s, &cfg).unwrap();
            for _ in 0..20 {
                let a = rng.random_range(0..n - cfg.min_len());
                let b = rng.random_range(a + cfg.min_len()..=n);
                let (direct, _) = segment_cost(&s, a, b, &cfg).unwrap();
                let got = m.get(a, b);
                assert!(
                    (got - direct).abs() <= 1e-8 * direct.abs().max(1.0),
                    "p={p} ({a},{b}): {got} vs {direct}"
                );
            }
        }
    }
}
