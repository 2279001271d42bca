//! Central finite-difference oracle for analytic gradients.

use rand::seq::index;
use rand::Rng;

use super::params::ParamSet;
use crate::error::{invalid, Result};

/// Denominator floor for relative errors; keeps near-zero gradients from
/// turning rounding noise into huge ratios.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    /// (set, flat index, analytic, numeric) of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
}

/// Picks `count` distinct (set, flat index) positions uniformly over the
/// concatenation of `sets`.
pub fn sample_positions<R: Rng + ?Sized>(
    sets: &[ParamSet<f64>],
    count: usize,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    let sizes: Vec<usize> = sets.iter().map(ParamSet::num_elements).collect();
    let total: usize = sizes.iter().sum();
    let mut picks = index::sample(rng, total, count.min(total)).into_vec();
    picks.sort_unstable();
    picks
        .into_iter()
        .map(|mut k| {
            let mut s = 0;
            while k >= sizes[s] {
                k -= sizes[s];
                s += 1;
            }
            (s, k)
        })
        .collect()
}

/// Compares `analytic` against `(L(θ+h) - L(θ-h)) / 2h` at `positions`.
/// `loss` must be a deterministic function of the parameter sets.
pub fn check_gradients(
    sets: &[ParamSet<f64>],
    analytic: &[ParamSet<f64>],
    positions: &[(usize, usize)],
    h: f64,
    mut loss: impl FnMut(&[ParamSet<f64>]) -> Result<f64>,
) -> Result<GradCheckReport> {
    if sets.len() != analytic.len() || sets.iter().zip(analytic).any(|(a, b)| !a.same_layout(b)) {
        return invalid("gradient layout does not match parameters");
    }
    let mut work = sets.to_vec();
    let mut report = GradCheckReport {
        checked: 0,
        max_relative_error: 0.0,
        worst: None,
    };
    for &(s, k) in positions {
        let orig = work[s]
            .get_flat(k)
            .ok_or_else(|| crate::Error::Validation("position out of range".into()))?;
        work[s].set_flat(k, orig + h)?;
        let plus = loss(&work)?;
        work[s].set_flat(k, orig - h)?;
        let minus = loss(&work)?;
        work[s].set_flat(k, orig)?;
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[s].get_flat(k).unwrap();
        let err = relative_error(a, numeric);
        report.checked += 1;
        if report.worst.is_none() || err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst = Some((s, k, a, numeric));
        }
    }
    Ok(report)
}
