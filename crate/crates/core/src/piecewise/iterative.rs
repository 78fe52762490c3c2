use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{fit_partition, Partition, PiecewiseConfig, PiecewiseFit};
use crate::error::{Error, Result};
use crate::regression::{GaussianComponent, Signal};
use crate::scalar::Real;

/// Stopping rule and restart count for the iterative fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterativeOptions<T> {
    pub max_iter: usize,
    /// Stop once `J` decreases by less than this between iterations.
    pub tol: T,
    pub random_starts: usize,
}

impl<T: Real> Default for IterativeOptions<T> {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: T::lit(1e-6),
            random_starts: 10,
        }
    }
}

/// Optimal re-segmentation when segment `k` must use `components[k]`.
///
/// Per-sample costs are accumulated into prefix sums, so each layer of the
/// recursion is a running minimum over admissible split points.
fn resegment<T: Real>(
    signal: &Signal<T>,
    components: &[GaussianComponent<T>],
    min_len: usize,
) -> Option<(Vec<usize>, T)> {
    let n = signal.len();
    let segments = components.len();
    let m = min_len.max(1);
    let prefix: Vec<Vec<T>> = components
        .iter()
        .map(|c| {
            let ln_s = c.sigma2.ln();
            let mut acc = T::zero();
            let mut p = Vec::with_capacity(n + 1);
            p.push(T::zero());
            for (&t, &x) in signal.t().iter().zip(signal.x()) {
                let r = x - c.mean_at(t);
                acc = acc + ln_s + r * r / c.sigma2;
                p.push(acc);
            }
            p
        })
        .collect();

    let mut prev = vec![T::infinity(); n + 1];
    for b in m..=n {
        prev[b] = prefix[0][b];
    }
    let mut splits: Vec<Vec<usize>> = vec![vec![0; n + 1]];
    for k in 1..segments {
        let mut cur = vec![T::infinity(); n + 1];
        let mut arg = vec![0; n + 1];
        let mut best = T::infinity();
        let mut best_h = 0;
        for b in ((k + 1) * m)..=n {
            let h = b - m;
            let cand = prev[h] - prefix[k][h];
            if cand < best {
                best = cand;
                best_h = h;
            }
            cur[b] = prefix[k][b] + best;
            arg[b] = best_h;
        }
        splits.push(arg);
        prev = cur;
    }
    let total = prev[n];
    if !total.is_finite() {
        return None;
    }
    let mut gamma = vec![n];
    let mut end = n;
    for k in (1..segments).rev() {
        end = splits[k][end];
        gamma.push(end);
    }
    gamma.push(0);
    gamma.reverse();
    Some((gamma, total))
}

/// Alternates per-segment regressions with re-segmentation under the
/// current parameters, starting from `init`.
pub fn iterative_fisher<T: Real>(
    signal: &Signal<T>,
    config: &PiecewiseConfig<T>,
    init: &Partition,
    options: &IterativeOptions<T>,
) -> Result<PiecewiseFit<T>> {
    config.validate()?;
    let n = signal.len();
    let min_len = config.min_len();
    let segments = init.segments();
    if n < segments * min_len {
        return Err(Error::Infeasible {
            n,
            segments,
            min_len,
        });
    }
    let mut partition = Partition::new(init.gamma().to_vec(), n, min_len)?;
    let (mut j, mut components) = fit_partition(signal, &partition, config)?;
    let mut trace = vec![j];
    let mut iterations = 0;

    while iterations < options.max_iter {
        let (gamma, _) = resegment(signal, &components, min_len).ok_or(Error::Infeasible {
            n,
            segments,
            min_len,
        })?;
        iterations += 1;
        let candidate = Partition::new(gamma, n, min_len)?;
        let (j_new, comps_new) = fit_partition(signal, &candidate, config)?;
        if j_new > j {
            // rounding can nudge an unchanged optimum upward; keep the incumbent
            break;
        }
        let decrease = j - j_new;
        partition = candidate;
        components = comps_new;
        j = j_new;
        trace.push(j);
        if decrease < options.tol {
            break;
        }
    }
    Ok(PiecewiseFit::assemble(
        partition, components, j, trace, iterations,
    ))
}

/// Draws `K − 1` distinct interior cuts uniformly, sorted, redrawing up to
/// 1000 times until every segment has at least `min_len` samples.
pub fn random_partition<R: Rng + ?Sized>(
    n: usize,
    segments: usize,
    min_len: usize,
    rng: &mut R,
) -> Option<Partition> {
    if segments == 0 || n < segments * min_len.max(1) {
        return None;
    }
    if segments == 1 {
        return Partition::new(vec![0, n], n, min_len).ok();
    }
    for _ in 0..1000 {
        let mut cuts: Vec<usize> = sample(rng, n - 1, segments - 1)
            .into_iter()
            .map(|c| c + 1)
            .collect();
        cuts.sort_unstable();
        let mut gamma = Vec::with_capacity(segments + 1);
        gamma.push(0);
        gamma.extend(cuts);
        gamma.push(n);
        if let Ok(p) = Partition::new(gamma, n, min_len) {
            return Some(p);
        }
    }
    None
}

/// Best of several [`iterative_fisher`] runs.
#[derive(Debug, Clone)]
pub struct MultiStartFit<T> {
    pub best: PiecewiseFit<T>,
    /// Final `J` of each start: the uniform start first, then random ones.
    /// Starts whose random draw failed are absent.
    pub start_criteria: Vec<T>,
}

/// Runs [`iterative_fisher`] from the uniform partition plus
/// `options.random_starts` random ordered partitions and keeps the smallest `J`.
pub fn multi_start_iterative<T: Real>(
    signal: &Signal<T>,
    segments: usize,
    config: &PiecewiseConfig<T>,
    options: &IterativeOptions<T>,
    seed: u64,
) -> Result<MultiStartFit<T>> {
    let n = signal.len();
    let min_len = config.min_len();
    let mut inits = vec![Partition::uniform(n, segments, min_len)?];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..options.random_starts {
        if let Some(p) = random_partition(n, segments, min_len, &mut rng) {
            inits.push(p);
        }
    }
    let fits: Vec<PiecewiseFit<T>> = inits
        .par_iter()
        .map(|init| iterative_fisher(signal, config, init, options))
        .collect::<Result<_>>()?;
    let start_criteria: Vec<T> = fits.iter().map(|f| f.criterion_j).collect();
    let best = fits
        .into_iter()
        .reduce(|a, b| if b.criterion_j < a.criterion_j { b } else { a })
        .expect("at least the uniform start");
    Ok(MultiStartFit {
        best,
        start_criteria,
    })
}
