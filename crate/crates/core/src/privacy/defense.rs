use rand::Rng;

use crate::error::{Error, Result};
use crate::gradcore::ParamVector;
use crate::radionet::GroupMaskSet;
use crate::scalar::Scalar;

use super::allocator::{allocate, AllocatorNet, NoisePlan};
use super::clip::clip_with_flag;
use super::config::{DefenseConfig, Scheme};
use super::noise::{add_group_noise, directed_sigmas, privatize_uniform};
use super::stats::{extract_stats, UploadStats};

/// A transmitted upload together with the defense telemetry that produced it.
#[derive(Debug, Clone)]
pub struct DefendedUpload<T> {
    pub upload: ParamVector<T>,
    /// Budget split, absent for schemes without noise.
    pub plan: Option<NoisePlan<T>>,
    /// Whether clipping changed the delta.
    pub clipped: bool,
    /// Statistics the allocator saw (adaptive scheme only).
    pub stats: Option<UploadStats<T>>,
}

/// Uniform noise expressed as a plan: each group's share of the budget is its size ratio.
pub fn uniform_plan<T: Scalar>(config: &DefenseConfig, masks: &GroupMaskSet) -> Result<NoisePlan<T>> {
    let d = T::from_usize_lossy(masks.dim());
    let w = masks.sizes().iter().map(|&s| T::from_usize_lossy(s) / d).collect();
    NoisePlan::from_weights(w, T::lit(config.budget(masks.dim())), &masks.sizes())
}

/// Directed noise expressed as a plan.
pub fn directed_plan<T: Scalar>(config: &DefenseConfig, masks: &GroupMaskSet) -> Result<NoisePlan<T>> {
    let b = T::lit(config.budget(masks.dim()));
    let sigmas = directed_sigmas(masks, b)?;
    let w = sigmas
        .iter()
        .zip(masks.sizes())
        .map(|(&s, n)| s * s * T::from_usize_lossy(n) / b)
        .collect();
    NoisePlan::from_weights(w, b, &masks.sizes())
}

/// Applies the configured scheme to a raw delta: clip (all schemes but
/// `none`/`fedsgd`), then the scheme's noise. `allocator` is required for
/// the adaptive scheme; its plan is computed from the clipped delta.
#[allow(clippy::too_many_arguments)]
pub fn apply_defense<T: Scalar, R: Rng + ?Sized>(
    delta: &ParamVector<T>,
    config: &DefenseConfig,
    masks: &GroupMaskSet,
    allocator: Option<&AllocatorNet<T>>,
    round: usize,
    total_rounds: usize,
    phase_indicator: T,
    rng: &mut R,
) -> Result<DefendedUpload<T>> {
    let (x, clipped) = if config.scheme.clips() {
        clip_with_flag(delta, T::lit(config.clip))
    } else {
        (delta.clone(), false)
    };
    let mut stats = None;
    let (upload, plan) = match config.scheme {
        Scheme::None | Scheme::FedSgd | Scheme::ClipOnly => (x, None),
        Scheme::Uniform => {
            let sigma0 = T::lit(config.sigma0());
            (privatize_uniform(&x, sigma0, rng), Some(uniform_plan(config, masks)?))
        }
        Scheme::DirectedUniform => {
            let plan = directed_plan(config, masks)?;
            let sigmas = directed_sigmas(masks, plan.budget)?;
            let mut out = x;
            add_group_noise(&mut out, masks, &sigmas, rng)?;
            (out, Some(plan))
        }
        Scheme::Adaptive => {
            let alloc =
                allocator.ok_or_else(|| Error::InvalidArgument("adaptive defense needs an allocator".into()))?;
            let s = extract_stats(&x, masks, round, total_rounds, phase_indicator)?;
            let plan = allocate(&s, alloc, T::lit(config.budget(masks.dim())), masks)?;
            let mut out = x;
            add_group_noise(&mut out, masks, &plan.sigmas, rng)?;
            stats = Some(s);
            (out, Some(plan))
        }
    };
    Ok(DefendedUpload {
        upload,
        plan,
        clipped,
        stats,
    })
}
