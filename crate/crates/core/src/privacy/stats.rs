use crate::error::{Error, Result};
use crate::gradcore::ParamVector;
use crate::radionet::GroupMaskSet;
use crate::scalar::Scalar;

/// Summary of one parameter group of an upload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupStats<T> {
    /// l2 norm of the masked delta.
    pub norm: T,
    /// Mean absolute value.
    pub mean_abs: T,
    /// Population standard deviation of the group's values.
    pub std: T,
    /// `d_g / d`
    pub size_ratio: T,
}

/// Low-dimensional upload descriptor read by the allocator: four numbers
/// per group followed by the global norm, `r / R` and the phase indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct UploadStats<T> {
    pub groups: Vec<GroupStats<T>>,
    pub global_norm: T,
    pub round_frac: T,
    pub phase: T,
}

impl<T: Scalar> UploadStats<T> {
    /// `4G + 3`
    pub fn dim(&self) -> usize {
        4 * self.groups.len() + 3
    }

    pub fn to_vec(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.dim());
        for g in &self.groups {
            v.extend_from_slice(&[g.norm, g.mean_abs, g.std, g.size_ratio]);
        }
        v.extend_from_slice(&[self.global_norm, self.round_frac, self.phase]);
        v
    }
}

/// Per-group `(norm, mean, population std)` of the values at `indices`.
pub(crate) fn moments<T: Scalar>(values: &[T], indices: &[usize]) -> (T, T, T, T) {
    let n = T::from_usize_lossy(indices.len());
    let (mut sum, mut sum_abs, mut max) = (T::zero(), T::zero(), T::zero());
    for &i in indices {
        let v = values[i];
        sum = sum + v;
        sum_abs = sum_abs + v.abs();
        max = max.max(v.abs());
    }
    let mean = sum / n;
    let mut ss = T::zero();
    let mut dev = T::zero();
    for &i in indices {
        let v = values[i];
        if max > T::zero() {
            ss = ss + (v / max) * (v / max);
        }
        dev = dev + (v - mean) * (v - mean);
    }
    (max * ss.sqrt(), mean, sum_abs / n, (dev / n).sqrt())
}

/// Statistics of a raw upload for round `round` of `total_rounds`.
pub fn extract_stats<T: Scalar>(
    delta: &ParamVector<T>,
    masks: &GroupMaskSet,
    round: usize,
    total_rounds: usize,
    phase_indicator: T,
) -> Result<UploadStats<T>> {
    if delta.len() != masks.dim() {
        return Err(Error::ShapeMismatch(format!(
            "masks cover {} indices, delta has {}",
            masks.dim(),
            delta.len()
        )));
    }
    let d = T::from_usize_lossy(masks.dim());
    let x = delta.as_slice();
    let groups = (0..masks.len())
        .map(|g| {
            let (norm, _, mean_abs, std) = moments(x, masks.indices(g));
            GroupStats {
                norm,
                mean_abs,
                std,
                size_ratio: T::from_usize_lossy(masks.size(g)) / d,
            }
        })
        .collect();
    let round_frac = if total_rounds == 0 {
        T::zero()
    } else {
        T::from_usize_lossy(round) / T::from_usize_lossy(total_rounds)
    };
    Ok(UploadStats {
        groups,
        global_norm: delta.norm(),
        round_frac,
        phase: phase_indicator,
    })
}
