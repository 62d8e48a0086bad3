use crate::error::{Error, Result};
use crate::radionet::GroupMaskSet;
use crate::scalar::Scalar;

use super::trace::UploadTrace;

/// `3 * G * S`
pub fn fingerprint_len(groups: usize, steps: usize) -> usize {
    3 * groups * steps
}

fn group_moments<T: Scalar>(x: &[T], idx: &[usize]) -> (T, T, T) {
    let n = T::from_usize_lossy(idx.len());
    let max = idx.iter().fold(T::zero(), |m, &i| m.max(x[i].abs()));
    let mean = idx.iter().map(|&i| x[i]).sum::<T>() / n;
    let (mut ss, mut dev) = (T::zero(), T::zero());
    for &i in idx {
        if max > T::zero() {
            let r = x[i] / max;
            ss = ss + r * r;
        }
        let c = x[i] - mean;
        dev = dev + c * c;
    }
    (max * ss.sqrt(), mean, (dev / n).sqrt())
}

/// Fingerprint of a sequence of step deltas: for each step, then each
/// group, the masked l2 norm, the mean and the population std.
pub fn fingerprint<T: Scalar>(steps: &[&[T]], masks: &GroupMaskSet) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(fingerprint_len(masks.len(), steps.len()));
    for x in steps {
        if x.len() != masks.dim() {
            return Err(Error::ShapeMismatch(format!(
                "step has {} coordinates, masks cover {}",
                x.len(),
                masks.dim()
            )));
        }
        for g in 0..masks.len() {
            let (n, m, s) = group_moments(x, masks.indices(g));
            out.extend_from_slice(&[n, m, s]);
        }
    }
    Ok(out)
}

pub fn extract_fingerprint(trace: &UploadTrace, masks: &GroupMaskSet) -> Result<Vec<f64>> {
    let steps: Vec<&[f64]> = trace.steps.iter().map(|s| s.as_slice()).collect();
    fingerprint(&steps, masks)
}

/// Gradient of `<grad_fp, fingerprint(steps)>` with respect to every step.
/// At a zero norm or zero std the corresponding subgradient 0 is used.
pub fn fingerprint_backward<T: Scalar>(steps: &[&[T]], masks: &GroupMaskSet, grad_fp: &[T]) -> Result<Vec<Vec<T>>> {
    if grad_fp.len() != fingerprint_len(masks.len(), steps.len()) {
        return Err(Error::ShapeMismatch("fingerprint gradient length".into()));
    }
    let mut out = Vec::with_capacity(steps.len());
    for (s, x) in steps.iter().enumerate() {
        if x.len() != masks.dim() {
            return Err(Error::ShapeMismatch("step length".into()));
        }
        let mut gx = vec![T::zero(); x.len()];
        for g in 0..masks.len() {
            let idx = masks.indices(g);
            let (norm, mean, std) = group_moments(x, idx);
            let o = 3 * (s * masks.len() + g);
            let (gn, gm, gs) = (grad_fp[o], grad_fp[o + 1], grad_fp[o + 2]);
            let n = T::from_usize_lossy(idx.len());
            for &i in idx {
                let mut v = gm / n;
                if norm > T::zero() {
                    v = v + gn * x[i] / norm;
                }
                if std > T::zero() {
                    v = v + gs * (x[i] - mean) / (n * std);
                }
                gx[i] = v;
            }
        }
        out.push(gx);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::relative_error;
    use crate::rng::{stream, Purpose};
    use rand::Rng;

    fn masks() -> GroupMaskSet {
        GroupMaskSet::from_groups(7, vec![vec![0, 3], vec![1, 4, 5], vec![2, 6]]).unwrap()
    }

    #[test]
    fn zero_trace() {
        let z = vec![0.0f64; 7];
        let fp = fingerprint(&[&z, &z, &z, &z], &masks()).unwrap();
        assert_eq!(fp.len(), 36);
        assert!(fp.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn known_values() {
        let x = [3.0, 1.0, 2.0, -4.0, 1.0, 1.0, 2.0];
        let fp = fingerprint(&[&x[..]], &masks()).unwrap();
        assert_eq!(fp[0], 5.0);
        assert_eq!(fp[1], -0.5);
        assert_eq!(fp[2], 3.5);
        assert_eq!(&fp[3..6], &[3f64.sqrt(), 1.0, 0.0]);
        assert!((fp[6] - 8f64.sqrt()).abs() < 1e-15);
        assert_eq!(&fp[7..9], &[2.0, 0.0]);
    }

    #[test]
    fn positive_homogeneity() {
        let mut rng = stream(1, Purpose::Test);
        let a: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        let fa = fingerprint(&[&a], &masks()).unwrap();
        let fb = fingerprint(&[&b], &masks()).unwrap();
        for (x, y) in fa.iter().zip(&fb) {
            assert!((2.0 * x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let m = masks();
        let mut rng = stream(2, Purpose::Test);
        let steps: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..7).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let w: Vec<f64> = (0..27).map(|_| rng.random_range(-1.0..1.0)).collect();
        let refs: Vec<&[f64]> = steps.iter().map(|s| s.as_slice()).collect();
        let g = fingerprint_backward(&refs, &m, &w).unwrap();
        let f = |st: &[Vec<f64>]| {
            let r: Vec<&[f64]> = st.iter().map(|s| s.as_slice()).collect();
            fingerprint(&r, &m)
                .unwrap()
                .iter()
                .zip(&w)
                .map(|(a, b)| a * b)
                .sum::<f64>()
        };
        let h = 1e-6;
        for s in 0..3 {
            for i in 0..7 {
                let mut p = steps.clone();
                p[s][i] += h;
                let mut q = steps.clone();
                q[s][i] -= h;
                let num = (f(&p) - f(&q)) / (2.0 * h);
                assert!(
                    relative_error(g[s][i], num, 1e-8) < 1e-6,
                    "{s},{i}: {} vs {num}",
                    g[s][i]
                );
            }
        }
    }

    #[test]
    fn wrong_length_rejected() {
        assert!(fingerprint(&[&[0.0f64; 3][..]], &masks()).is_err());
    }
}
