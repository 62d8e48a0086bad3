use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, floor)`; the floor keeps near-zero pairs from
/// blowing up the ratio.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the analytic gradient returned by `eval` against central
/// differences on `coords` randomly chosen coordinates (all of them when
/// `coords >= params.len()`).
///
/// `eval` returns `(value, gradient)` at the given point.
pub fn grad_check<T, F, R>(
    mut eval: F,
    params: &[T],
    epsilon: f64,
    coords: usize,
    rng: &mut R,
) -> Result<GradCheckReport>
where
    T: Scalar,
    F: FnMut(&[T]) -> (T, Vec<T>),
    R: Rng + ?Sized,
{
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "finite-difference epsilon must be positive, got {epsilon}"
        )));
    }
    let (_, analytic) = eval(params);
    if analytic.len() != params.len() {
        return Err(Error::ShapeMismatch(format!(
            "gradient has {} entries for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let indices: Vec<usize> = if coords >= params.len() {
        (0..params.len()).collect()
    } else {
        let mut v = sample(rng, params.len(), coords).into_vec();
        v.sort_unstable();
        v
    };
    // Coordinates whose gradient is negligible against the largest one are
    // compared on an absolute scale; their central differences are pure roundoff.
    let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.to_f64_lossy().abs()));
    let floor = (1e-7 * scale).max(1e-8);
    let mut point = params.to_vec();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_index: 0,
        checked: indices.len(),
    };
    for &i in &indices {
        let orig = point[i];
        point[i] = orig + T::lit(epsilon);
        let fp = eval(&point).0.to_f64_lossy();
        point[i] = orig - T::lit(epsilon);
        let fm = eval(&point).0.to_f64_lossy();
        point[i] = orig;
        let numeric = (fp - fm) / (2.0 * epsilon);
        let err = relative_error(analytic[i].to_f64_lossy(), numeric, floor);
        if err > report.max_relative_error || err.is_nan() {
            report.max_relative_error = err;
            report.worst_index = i;
        }
    }
    Ok(report)
}
