use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gradcore::ParamVector;
use crate::radionet::GroupMaskSet;
use crate::scalar::Scalar;

use super::allocator::NoisePlan;

/// Groups treated as transmitter-sensitive by the directed scheme.
pub const SENSITIVE_GROUPS: [usize; 2] = [0, 1];

pub fn standard_normal_vec<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<T> {
    (0..n).map(|_| T::lit(StandardNormal.sample(rng))).collect()
}

/// Adds `N(0, sigma_g^2)` to every coordinate of group `g`, drawing in
/// coordinate order. Coordinates of groups with `sigma_g = 0` are left
/// untouched and consume no draws.
pub fn add_group_noise<T: Scalar, R: Rng + ?Sized>(
    x: &mut ParamVector<T>,
    masks: &GroupMaskSet,
    sigmas: &[T],
    rng: &mut R,
) -> Result<()> {
    if sigmas.len() != masks.len() || x.len() != masks.dim() {
        return Err(Error::ShapeMismatch(format!(
            "{} scales for {} groups over {} coordinates, upload has {}",
            sigmas.len(),
            masks.len(),
            masks.dim(),
            x.len()
        )));
    }
    let assign = masks.assignment();
    for (v, &g) in x.as_mut_slice().iter_mut().zip(assign) {
        let s = sigmas[g];
        if s > T::zero() {
            let n: f64 = StandardNormal.sample(rng);
            *v = *v + s * T::lit(n);
        }
    }
    Ok(())
}

/// i.i.d. `N(0, sigma0^2)` on every coordinate.
pub fn privatize_uniform<T: Scalar, R: Rng + ?Sized>(
    clipped: &ParamVector<T>,
    sigma0: T,
    rng: &mut R,
) -> ParamVector<T> {
    let mut out = clipped.clone();
    if sigma0 > T::zero() {
        for v in out.as_mut_slice() {
            let n: f64 = StandardNormal.sample(rng);
            *v = *v + sigma0 * T::lit(n);
        }
    }
    out
}

/// Scale for the directed scheme: the whole budget spread over the sensitive groups.
pub fn directed_sigma<T: Scalar>(masks: &GroupMaskSet, budget: T) -> Result<T> {
    let d_sens: usize = SENSITIVE_GROUPS
        .iter()
        .filter(|&&g| g < masks.len())
        .map(|&g| masks.size(g))
        .sum();
    if d_sens == 0 {
        return Err(Error::InvalidArgument(
            "directed noise needs a non-empty sensitive set".into(),
        ));
    }
    Ok((budget / T::from_usize_lossy(d_sens)).sqrt())
}

/// Per-group scales of the directed scheme.
pub fn directed_sigmas<T: Scalar>(masks: &GroupMaskSet, budget: T) -> Result<Vec<T>> {
    let s = directed_sigma(masks, budget)?;
    Ok((0..masks.len())
        .map(|g| if SENSITIVE_GROUPS.contains(&g) { s } else { T::zero() })
        .collect())
}

/// `N(0, B / d_sens)` on the sensitive groups, residual group untouched.
pub fn privatize_directed<T: Scalar, R: Rng + ?Sized>(
    clipped: &ParamVector<T>,
    masks: &GroupMaskSet,
    budget: T,
    rng: &mut R,
) -> Result<ParamVector<T>> {
    let sigmas = directed_sigmas(masks, budget)?;
    let mut out = clipped.clone();
    add_group_noise(&mut out, masks, &sigmas, rng)?;
    Ok(out)
}

/// Group-wise noise with the scales of `plan`.
pub fn privatize_adaptive<T: Scalar, R: Rng + ?Sized>(
    clipped: &ParamVector<T>,
    plan: &NoisePlan<T>,
    masks: &GroupMaskSet,
    rng: &mut R,
) -> Result<ParamVector<T>> {
    let mut out = clipped.clone();
    add_group_noise(&mut out, masks, &plan.sigmas, rng)?;
    Ok(out)
}
