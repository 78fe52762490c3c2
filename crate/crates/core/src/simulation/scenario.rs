use ndarray::array;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::regression::{uniform_times, GaussianComponent, Signal};
use crate::rhlp::{logistic_proportions, RhlpParams};
use crate::scalar::Real;

/// Piecewise polynomial ground truth sampled on a uniform grid over `(0, span]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseScenario<T> {
    pub name: String,
    /// Segment boundaries in seconds, `0 = τ_1 < … < τ_{K+1} = span`.
    pub transition_times: Vec<T>,
    pub components: Vec<GaussianComponent<T>>,
}

impl<T: Real> PiecewiseScenario<T> {
    pub fn new(
        name: impl Into<String>,
        transition_times: Vec<T>,
        components: Vec<GaussianComponent<T>>,
    ) -> Result<Self> {
        let ok_shape = transition_times.len() == components.len() + 1 && !components.is_empty();
        let ok_order = transition_times.first() == Some(&T::zero())
            && transition_times.windows(2).all(|w| w[1] > w[0]);
        if !ok_shape || !ok_order {
            return Err(Error::InvalidArgument(
                "transition times must start at 0, increase strictly and bound every component"
                    .into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            transition_times,
            components,
        })
    }

    /// Three quadratic regimes switching at 0.6 s and 4 s.
    pub fn situation1() -> Self {
        let c = |b: [f64; 3], s2: f64| {
            GaussianComponent::new(array![T::lit(b[0]), T::lit(b[1]), T::lit(b[2])], T::lit(s2))
        };
        Self::new(
            "situation1",
            [0.0, 0.6, 4.0, 5.0].iter().map(|&v| T::lit(v)).collect(),
            vec![
                c([735.0, -1320.0, 1000.0], 4.0),
                c([270.0, 60.0, -15.0], 10.0),
                c([320.0, 40.0, -4.0], 15.0),
            ],
        )
        .expect("valid built-in scenario")
    }

    /// Three quadratic regimes switching at 1 s and 3.5 s.
    pub fn situation2() -> Self {
        let c = |b: [f64; 3], s2: f64| {
            GaussianComponent::new(array![T::lit(b[0]), T::lit(b[1]), T::lit(b[2])], T::lit(s2))
        };
        Self::new(
            "situation2",
            [0.0, 1.0, 3.5, 5.0].iter().map(|&v| T::lit(v)).collect(),
            vec![
                c([65.0, -70.0, 35.0], 4.0),
                c([15.0, 20.0, -5.0], 10.0),
                c([-90.0, 50.0, -5.0], 15.0),
            ],
        )
        .expect("valid built-in scenario")
    }

    /// Looks up a built-in scenario by name.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "situation1" => Some(Self::situation1()),
            "situation2" => Some(Self::situation2()),
            _ => None,
        }
    }

    pub fn segments(&self) -> usize {
        self.components.len()
    }

    pub fn degree(&self) -> usize {
        self.components
            .iter()
            .map(|c| c.degree())
            .max()
            .unwrap_or(0)
    }

    pub fn span(&self) -> T {
        *self.transition_times.last().unwrap()
    }

    /// Interior transition times.
    pub fn interior_transitions(&self) -> &[T] {
        let m = self.transition_times.len();
        &self.transition_times[1..m - 1]
    }

    /// Sample boundaries `γ_k = round(τ_k / Δt)` with `Δt = span / n`.
    pub fn boundaries(&self, n: usize) -> Vec<usize> {
        let dt = self.span() / T::count(n);
        self.transition_times
            .iter()
            .map(|&tau| (tau / dt).round().to_usize().unwrap_or(0).min(n))
            .collect()
    }

    /// Zero-based true segment of each of the `n` samples.
    pub fn labels(&self, n: usize) -> Vec<usize> {
        let g = self.boundaries(n);
        let mut out = Vec::with_capacity(n);
        for k in 0..self.segments() {
            out.extend(std::iter::repeat_n(k, g[k + 1].saturating_sub(g[k])));
        }
        out
    }

    pub fn times(&self, n: usize) -> Vec<T> {
        uniform_times(self.span(), n)
    }
}

fn standard_normal<T: Real, R: Rng>(rng: &mut R) -> T {
    let z: f64 = StandardNormal.sample(rng);
    T::lit(z)
}

/// Draws `n` samples from a piecewise scenario.
///
/// Sample `i` (1-based) sits at `t_i = i·Δt` and belongs to segment `k` when
/// `γ_k < i ≤ γ_{k+1}`.
pub fn simulate_piecewise<T: Real>(
    scenario: &PiecewiseScenario<T>,
    n: usize,
    seed: u64,
) -> Result<(Signal<T>, Vec<usize>)> {
    let k = scenario.segments();
    let min_len = scenario.degree() + 2;
    if n < k * min_len {
        return Err(Error::Infeasible {
            n,
            segments: k,
            min_len,
        });
    }
    let labels = scenario.labels(n);
    let t = scenario.times(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = t
        .iter()
        .zip(&labels)
        .map(|(&ti, &z)| {
            let c = &scenario.components[z];
            c.mean_at(ti) + c.sigma2.sqrt() * standard_normal::<T, _>(&mut rng)
        })
        .collect();
    Ok((Signal::new(t, x)?, labels))
}

/// Draws labels from the hidden logistic process and then each sample from
/// its component's Gaussian.
pub fn simulate_rhlp<T: Real>(
    params: &RhlpParams<T>,
    t: &[T],
    seed: u64,
) -> Result<(Signal<T>, Vec<usize>)> {
    let pi = logistic_proportions(&params.logistic, t);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = Vec::with_capacity(t.len());
    let mut x = Vec::with_capacity(t.len());
    for (i, &ti) in t.iter().enumerate() {
        let u = T::lit(rng.random::<f64>());
        let row = pi.matrix().row(i);
        let mut acc = T::zero();
        let mut z = row.len() - 1;
        for (k, &p) in row.iter().enumerate() {
            acc = acc + p;
            if u < acc {
                z = k;
                break;
            }
        }
        let c = &params.components[z];
        labels.push(z);
        x.push(c.mean_at(ti) + c.sigma2.sqrt() * standard_normal::<T, _>(&mut rng));
    }
    Ok((Signal::new(t.to_vec(), x)?, labels))
}
