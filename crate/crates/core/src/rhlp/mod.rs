//! Regression with a hidden logistic process.
//!
//! Each sample is drawn from one of `K` polynomial regressions; which one is
//! governed by a latent label whose probabilities vary smoothly in time
//! through a softmax of degree-`q` polynomials,
//!
//! ```text
//! π_ik(w) = exp(w_kᵀ v_i) / Σ_ℓ exp(w_ℓᵀ v_i),   v_i = (1, t_i, …, t_i^q)
//! ```
//!
//! with `w_K ≡ 0` for identifiability. Parameters are estimated by EM
//! ([`em_fit`]); the maximization over `w` is a weighted multinomial
//! logistic regression solved by Newton's method with the exact Hessian
//! ([`irls_solve`]).

mod em;
mod logistic;
mod select;

pub use em::{
    bic, denoise, e_step, em_fit, hard_labels, m_step_regression, mixture_log_likelihood,
    parameter_count, EmConfig, FitReport, InitStrategy,
};
pub use logistic::{
    irls_gradient, irls_hessian, irls_objective_q1, irls_solve, logistic_proportions, IrlsOptions,
    IrlsOutcome,
};
pub use select::{select_model, ModelSelection, SelectionRow};

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::regression::GaussianComponent;
use crate::scalar::Real;

/// Softmax coefficients `w_1..w_K`, stored as a `K × (q+1)` matrix whose
/// last row is identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticProcess<T> {
    weights: Array2<T>,
}

impl<T: Real> LogisticProcess<T> {
    /// All-zero coefficients: uniform proportions.
    pub fn zeros(components: usize, q: usize) -> Self {
        Self {
            weights: Array2::zeros((components.max(1), q + 1)),
        }
    }

    /// Accepts any `K × (q+1)` matrix and subtracts its last row from every
    /// row, which leaves the proportions unchanged and zeroes `w_K`.
    pub fn from_weights(mut weights: Array2<T>) -> Result<Self> {
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "logistic weights must be non-empty".into(),
            ));
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "logistic weights must be finite".into(),
            ));
        }
        let reference = weights.row(weights.nrows() - 1).to_owned();
        for mut row in weights.rows_mut() {
            row.zip_mut_with(&reference, |a, &b| *a = *a - b);
        }
        Ok(Self { weights })
    }

    /// Builds the process from the stacked free coefficients of `w_1..w_{K-1}`.
    pub fn from_free(components: usize, q: usize, free: ArrayView1<'_, T>) -> Self {
        let d = q + 1;
        assert_eq!(free.len(), (components - 1) * d, "free parameter length");
        let mut weights = Array2::zeros((components, d));
        for k in 0..components - 1 {
            for j in 0..d {
                weights[[k, j]] = free[k * d + j];
            }
        }
        Self { weights }
    }

    pub fn components(&self) -> usize {
        self.weights.nrows()
    }

    /// Degree `q` of the logistic covariates.
    pub fn degree(&self) -> usize {
        self.weights.ncols() - 1
    }

    pub fn weights(&self) -> &Array2<T> {
        &self.weights
    }

    /// Stacked `(w_1, …, w_{K-1})`, length `(K−1)(q+1)`.
    pub fn free_params(&self) -> Array1<T> {
        let k = self.components() - 1;
        self.weights
            .rows()
            .into_iter()
            .take(k)
            .flat_map(|r| r.to_vec())
            .collect()
    }
}

/// Full parameter set `θ = (w, β_1..β_K, σ²_1..σ²_K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RhlpParams<T> {
    pub logistic: LogisticProcess<T>,
    pub components: Vec<GaussianComponent<T>>,
}

impl<T: Real> RhlpParams<T> {
    pub fn new(
        logistic: LogisticProcess<T>,
        components: Vec<GaussianComponent<T>>,
    ) -> Result<Self> {
        if components.is_empty() || logistic.components() != components.len() {
            return Err(Error::InvalidArgument(format!(
                "{} logistic rows for {} regression components",
                logistic.components(),
                components.len()
            )));
        }
        let p = components[0].degree();
        if components
            .iter()
            .any(|c| c.degree() != p || !(c.sigma2 > T::zero()))
        {
            return Err(Error::InvalidArgument(
                "components must share a degree and have positive variance".into(),
            ));
        }
        Ok(Self {
            logistic,
            components,
        })
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn p(&self) -> usize {
        self.components[0].degree()
    }

    pub fn q(&self) -> usize {
        self.logistic.degree()
    }
}

/// `n × K` matrix of mixing proportions `π_ik(w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Proportions<T>(pub Array2<T>);

/// `n × K` matrix of posterior membership probabilities `τ_ik`.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriors<T>(pub Array2<T>);

impl<T> Proportions<T> {
    pub fn matrix(&self) -> &Array2<T> {
        &self.0
    }
}

impl<T> Posteriors<T> {
    pub fn matrix(&self) -> &Array2<T> {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn from_weights_rezeroes_reference_row() {
        let lp = LogisticProcess::from_weights(array![[3.0, 1.0], [1.0, -1.0]]).unwrap();
        assert_eq!(lp.weights(), &array![[2.0, 2.0], [0.0, 0.0]]);
        assert_eq!(lp.free_params(), array![2.0, 2.0]);
        let back = LogisticProcess::from_free(2, 1, lp.free_params().view());
        assert_eq!(back, lp);
    }

    #[test]
    fn params_reject_mismatched_shapes() {
        let comps = vec![GaussianComponent::new(array![0.0], 1.0)];
        assert!(RhlpParams::new(LogisticProcess::<f64>::zeros(2, 1), comps.clone()).is_err());
        assert!(RhlpParams::new(LogisticProcess::<f64>::zeros(1, 1), comps).is_ok());
    }
}
