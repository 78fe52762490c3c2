use crate::error::{Error, Result};
use crate::piecewise::PiecewiseFit;
use crate::rhlp::{denoise, FitReport, RhlpParams};
use crate::scalar::Real;

use super::PiecewiseScenario;

/// Anything that defines an expected signal `E(x_i)` at given times.
pub trait MeanCurve<T> {
    fn mean_curve(&self, t: &[T]) -> Vec<T>;
}

impl<T: Real> MeanCurve<T> for PiecewiseScenario<T> {
    fn mean_curve(&self, t: &[T]) -> Vec<T> {
        self.labels(t.len())
            .into_iter()
            .zip(t)
            .map(|(k, &ti)| self.components[k].mean_at(ti))
            .collect()
    }
}

impl<T: Real> MeanCurve<T> for RhlpParams<T> {
    fn mean_curve(&self, t: &[T]) -> Vec<T> {
        denoise(self, t)
    }
}

impl<T: Real> MeanCurve<T> for FitReport<T> {
    fn mean_curve(&self, t: &[T]) -> Vec<T> {
        denoise(&self.params, t)
    }
}

impl<T: Real> MeanCurve<T> for PiecewiseFit<T> {
    fn mean_curve(&self, t: &[T]) -> Vec<T> {
        self.denoise(t)
    }
}

impl<T: Real> MeanCurve<T> for [T] {
    fn mean_curve(&self, _t: &[T]) -> Vec<T> {
        self.to_vec()
    }
}

/// Relabels a sequence by order of first appearance.
fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut seen: Vec<usize> = Vec::new();
    labels
        .iter()
        .map(|l| match seen.iter().position(|s| s == l) {
            Some(i) => i,
            None => {
                seen.push(*l);
                seen.len() - 1
            }
        })
        .collect()
}

/// Fraction of samples whose labels disagree once both labelings are renamed
/// in temporal order of first appearance.
pub fn misclassification_rate(truth: &[usize], estimate: &[usize]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::LengthMismatch {
            times: truth.len(),
            values: estimate.len(),
        });
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let (a, b) = (canonical(truth), canonical(estimate));
    let wrong = a.iter().zip(&b).filter(|(x, y)| x != y).count();
    Ok(wrong as f64 / truth.len() as f64)
}

/// Mean squared difference between two expectation curves on `t`.
pub fn denoising_error<T, A, B>(truth: &A, estimate: &B, t: &[T]) -> T
where
    T: Real,
    A: MeanCurve<T> + ?Sized,
    B: MeanCurve<T> + ?Sized,
{
    let a = truth.mean_curve(t);
    let b = estimate.mean_curve(t);
    assert_eq!(a.len(), b.len(), "expectation curves differ in length");
    if a.is_empty() {
        return T::zero();
    }
    let sse = a
        .iter()
        .zip(&b)
        .map(|(&u, &v)| (u - v) * (u - v))
        .sum::<T>();
    sse / T::count(a.len())
}

/// Time of the last sample before every label switch.
pub fn transition_times<T: Real>(labels: &[usize], t: &[T]) -> Vec<T> {
    labels
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] != w[1])
        .map(|(i, _)| t[i])
        .collect()
}

/// For every true transition, the distance to the nearest estimated one
/// (`fallback` when nothing was estimated).
pub fn transition_errors<T: Real>(truth: &[T], estimate: &[T], fallback: T) -> Vec<T> {
    truth
        .iter()
        .map(|&tau| {
            estimate
                .iter()
                .map(|&e| (e - tau).abs())
                .fold(None, |m: Option<T>, d| Some(m.map_or(d, |m| m.min(d))))
                .unwrap_or(fallback)
        })
        .collect()
}
