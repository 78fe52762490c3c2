use super::{
    build_cost_matrix, fit_partition, CostMatrix, Partition, PiecewiseConfig, PiecewiseFit,
};
use crate::error::{Error, Result};
use crate::regression::Signal;
use crate::scalar::Real;

/// Optimal prefix costs `C_k(0, b)` and the split index that attains each.
#[derive(Debug, Clone)]
pub struct DpTable<T> {
    /// `cost[k-1][b] = C_k(0, b)`.
    pub cost: Vec<Vec<T>>,
    /// `split[k-1][b]`: start of the last segment in the optimal `k`-segment
    /// partition of `0..b`; `None` where infeasible.
    pub split: Vec<Vec<Option<usize>>>,
}

impl<T: Real> DpTable<T> {
    /// Runs the recursion `C_k(0,b) = min_h C_{k-1}(0,h) + C_1(h,b)` for
    /// `k = 1..=segments`. Ties go to the smallest `h`.
    pub fn compute(costs: &CostMatrix<T>, segments: usize) -> Self {
        let n = costs.n();
        let m = costs.min_len().max(1);
        let mut cost = vec![vec![T::infinity(); n + 1]; segments];
        let mut split = vec![vec![None; n + 1]; segments];

        for b in m..=n {
            cost[0][b] = costs.get(0, b);
            split[0][b] = Some(0);
        }
        for k in 1..segments {
            let (prev_rows, cur_rows) = cost.split_at_mut(k);
            let prev = &prev_rows[k - 1];
            let cur = &mut cur_rows[0];
            for b in ((k + 1) * m)..=n {
                let mut best = T::infinity();
                let mut arg = None;
                for h in (k * m)..=(b - m) {
                    let c = prev[h] + costs.get(h, b);
                    if c < best {
                        best = c;
                        arg = Some(h);
                    }
                }
                cur[b] = best;
                split[k][b] = arg;
            }
        }
        Self { cost, split }
    }

    pub fn optimal_cost(&self, segments: usize, b: usize) -> T {
        self.cost[segments - 1][b]
    }

    /// Recovers the optimal boundaries of the `segments`-segment partition of `0..b`.
    pub fn backtrack(&self, segments: usize, b: usize) -> Option<Vec<usize>> {
        let mut gamma = vec![b];
        let mut end = b;
        for k in (0..segments).rev() {
            let h = self.split[k][end]?;
            gamma.push(h);
            end = h;
        }
        gamma.reverse();
        Some(gamma)
    }
}

/// Globally optimal `K`-segment piecewise polynomial fit.
pub fn fisher_dp<T: Real>(
    signal: &Signal<T>,
    segments: usize,
    config: &PiecewiseConfig<T>,
) -> Result<PiecewiseFit<T>> {
    fisher_dp_with_table(signal, segments, config).map(|(fit, _)| fit)
}

/// Like [`fisher_dp`] but also returns the dynamic-programming table.
pub fn fisher_dp_with_table<T: Real>(
    signal: &Signal<T>,
    segments: usize,
    config: &PiecewiseConfig<T>,
) -> Result<(PiecewiseFit<T>, DpTable<T>)> {
    config.validate()?;
    let n = signal.len();
    let min_len = config.min_len();
    if segments == 0 || n < segments * min_len {
        return Err(Error::Infeasible {
            n,
            segments,
            min_len,
        });
    }
    let costs = build_cost_matrix(signal, config)?;
    let table = DpTable::compute(&costs, segments);
    let gamma = table.backtrack(segments, n).ok_or(Error::Infeasible {
        n,
        segments,
        min_len,
    })?;
    let partition = Partition::new(gamma, n, min_len)?;
    let (_, components) = fit_partition(signal, &partition, config)?;
    let j = table.optimal_cost(segments, n);
    Ok((
        PiecewiseFit::assemble(partition, components, j, vec![j], 0),
        table,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::piecewise::{criterion, segment_cost};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn step_signal(seed: u64) -> Signal<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = (0..100)
            .map(|i| {
                let level = if i < 50 { 0.0 } else { 10.0 };
                level + 0.1 * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        Signal::uniform(5.0, x).unwrap()
    }

    #[test]
    fn single_segment_is_whole_signal_ols() {
        let s = step_signal(1);
        let cfg = PiecewiseConfig::new(1);
        let fit = fisher_dp(&s, 1, &cfg).unwrap();
        let (direct, _) = segment_cost(&s, 0, 100, &cfg).unwrap();
        assert_eq!(fit.partition.gamma(), &[0, 100]);
        assert!((fit.criterion_j - direct).abs() < 1e-8 * direct.abs());
    }

    #[test]
    fn step_change_matches_brute_force_single_split() {
        let s = step_signal(2);
        let cfg = PiecewiseConfig::new(0);
        let fit = fisher_dp(&s, 2, &cfg).unwrap();
        let brute = (cfg.min_len()..=100 - cfg.min_len())
            .map(|h| {
                let c = segment_cost(&s, 0, h, &cfg).unwrap().0
                    + segment_cost(&s, h, 100, &cfg).unwrap().0;
                (h, c)
            })
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assert_eq!(brute.0, 50);
        assert_eq!(fit.partition.gamma(), &[0, 50, 100]);
    }

    #[test]
    fn recursion_holds_at_every_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..40).map(|_| rng.random::<f64>() * 3.0).collect();
        let s = Signal::uniform(2.0, x).unwrap();
        let cfg = PiecewiseConfig::new(1);
        let costs = build_cost_matrix(&s, &cfg).unwrap();
        let table = DpTable::compute(&costs, 4);
        let m = cfg.min_len();
        for k in 1..4 {
            for b in ((k + 1) * m)..=40 {
                let best = (k * m..=b - m)
                    .map(|h| table.cost[k - 1][h] + costs.get(h, b))
                    .fold(f64::INFINITY, f64::min);
                assert_eq!(table.cost[k][b], best);
                // more segments never hurt once feasible
                assert!(table.cost[k][b] <= table.cost[k - 1][b] + 1e-9);
            }
        }
    }

    #[test]
    fn reported_criterion_matches_refit() {
        let s = step_signal(9);
        let cfg = PiecewiseConfig::new(1);
        let fit = fisher_dp(&s, 3, &cfg).unwrap();
        let rebuilt = criterion(&s, &fit.partition, &fit.components);
        assert!((rebuilt - fit.criterion_j).abs() < 1e-9 * fit.criterion_j.abs().max(1.0));
    }

    #[test]
    fn too_many_segments_is_infeasible() {
        let s = step_signal(0);
        assert!(matches!(
            fisher_dp(&s, 40, &PiecewiseConfig::new(1)),
            Err(Error::Infeasible {
                n: 100,
                segments: 40,
                min_len: 3
            })
        ));
    }

    mod props {
        use super::*;
        use crate::piecewise::{fit_partition, random_partition};
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn optimum_beats_every_random_partition(
                xs in proptest::collection::vec(-3.0f64..3.0, 12..40),
                k in 1usize..4,
                p in 0usize..2,
                seed in any::<u64>(),
            ) {
                let n = xs.len();
                let s = Signal::uniform(5.0, xs).unwrap();
                let cfg = PiecewiseConfig::new(p);
                prop_assume!(n >= k * cfg.min_len());
                let fit = fisher_dp(&s, k, &cfg).unwrap();
                let g = fit.partition.gamma();
                prop_assert_eq!(g.len(), k + 1);
                prop_assert!(g.windows(2).all(|w| w[1] - w[0] >= cfg.min_len()));
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for _ in 0..5 {
                    let other = random_partition(n, k, cfg.min_len(), &mut rng).unwrap();
                    let (j, _) = fit_partition(&s, &other, &cfg).unwrap();
                    prop_assert!(fit.criterion_j <= j + 1e-9);
                }
            }
        }
    }
}
