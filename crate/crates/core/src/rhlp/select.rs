use rayon::prelude::*;

use super::{em_fit, EmConfig, FitReport};
use crate::regression::Signal;
use crate::scalar::Real;

/// One cell of a model-selection sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRow<T> {
    pub k: usize,
    pub p: usize,
    pub q: usize,
    pub log_likelihood: Option<T>,
    pub bic: Option<T>,
    /// Error message when the fit failed.
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ModelSelection<T> {
    /// Highest-BIC fit; `None` only if every cell failed.
    pub best: Option<FitReport<T>>,
    /// Rows ordered by `(K, p)`.
    pub table: Vec<SelectionRow<T>>,
}

/// Fits every `(K, p)` in the grid with `q` fixed and keeps the maximum BIC.
///
/// Failed fits are recorded in the table and never abort the sweep. Ties go
/// to the smaller `K`, then the smaller `p`.
pub fn select_model<T: Real>(
    signal: &Signal<T>,
    k_range: &[usize],
    p_range: &[usize],
    q: usize,
    base: &EmConfig<T>,
    seed: u64,
) -> ModelSelection<T> {
    let mut grid: Vec<(usize, usize)> = k_range
        .iter()
        .flat_map(|&k| p_range.iter().map(move |&p| (k, p)))
        .collect();
    grid.sort_unstable();
    grid.dedup();

    let fits: Vec<_> = grid
        .par_iter()
        .map(|&(k, p)| {
            let config = EmConfig { k, p, q, ..*base };
            em_fit(signal, &config, seed)
        })
        .collect();

    let mut best: Option<FitReport<T>> = None;
    let mut table = Vec::with_capacity(grid.len());
    for (&(k, p), fit) in grid.iter().zip(fits) {
        match fit {
            Ok(report) => {
                table.push(SelectionRow {
                    k,
                    p,
                    q,
                    log_likelihood: Some(report.log_likelihood),
                    bic: Some(report.bic),
                    error: None,
                });
                if best.as_ref().is_none_or(|b| report.bic > b.bic) {
                    best = Some(report);
                }
            }
            Err(e) => table.push(SelectionRow {
                k,
                p,
                q,
                log_likelihood: None,
                bic: None,
                error: Some(e.to_string()),
            }),
        }
    }
    ModelSelection { best, table }
}
