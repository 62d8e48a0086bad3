use rand::Rng;

use crate::error::{Error, Result};
use crate::gradcore::{Activation, Mlp, MlpCache};
use crate::radionet::GroupMaskSet;
use crate::scalar::Scalar;

use super::stats::UploadStats;

pub const ALLOCATOR_HIDDEN: usize = 32;

/// Numerically stable softmax (max-subtracted).
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let e: Vec<T> = logits.iter().map(|&a| (a - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub fn entropy<T: Scalar>(w: &[T]) -> T {
    -w.iter().filter(|&&p| p > T::zero()).map(|&p| p * p.ln()).sum::<T>()
}

/// Budget split for one upload: simplex weights, group energies and the
/// per-coordinate noise scale of each group.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePlan<T> {
    pub weights: Vec<T>,
    pub energies: Vec<T>,
    pub sigmas: Vec<T>,
    pub budget: T,
}

impl<T: Scalar> NoisePlan<T> {
    /// `E_g = B w_g`, `sigma_g = sqrt(E_g / d_g)`.
    pub fn from_weights(weights: Vec<T>, budget: T, sizes: &[usize]) -> Result<Self> {
        if weights.len() != sizes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for {} groups",
                weights.len(),
                sizes.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(Error::NonFinite("allocation weights off the simplex".into()));
        }
        let energies: Vec<T> = weights.iter().map(|&w| (budget * w).max(T::zero())).collect();
        let sigmas = energies
            .iter()
            .zip(sizes)
            .map(|(&e, &d)| (e / T::from_usize_lossy(d)).sqrt())
            .collect();
        Ok(Self {
            weights,
            energies,
            sigmas,
            budget,
        })
    }

    pub fn groups(&self) -> usize {
        self.weights.len()
    }
}

/// Allocator network: upload statistics to `G` allocation logits.
///
/// Magnitude features (norms, mean magnitudes, standard deviations) are
/// compressed with `ln(1 + x)` before the first layer; size ratios, the
/// round fraction and the phase indicator enter unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocatorNet<T> {
    mlp: Mlp<T>,
    groups: usize,
}

impl<T: Scalar> AllocatorNet<T> {
    /// All parameters zero: uniform weights for every input.
    pub fn zeros(groups: usize, hidden: usize) -> Self {
        Self {
            mlp: Mlp::zeros(4 * groups + 3, hidden, groups, Activation::Tanh),
            groups,
        }
    }

    /// Random first layer and zero head, so training starts from uniform weights.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, groups: usize, hidden: usize) -> Self {
        Self {
            mlp: Mlp::init(rng, 4 * groups + 3, hidden, groups, Activation::Tanh, true),
            groups,
        }
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn mlp(&self) -> &Mlp<T> {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp<T> {
        &mut self.mlp
    }

    pub fn features(&self, stats: &UploadStats<T>) -> Result<Vec<T>> {
        if stats.groups.len() != self.groups {
            return Err(Error::ShapeMismatch(format!(
                "allocator for {} groups got stats for {}",
                self.groups,
                stats.groups.len()
            )));
        }
        let squash = |x: T| x.max(T::zero()).ln_1p();
        let mut v = Vec::with_capacity(stats.dim());
        for g in &stats.groups {
            v.extend_from_slice(&[squash(g.norm), squash(g.mean_abs), squash(g.std), g.size_ratio]);
        }
        v.extend_from_slice(&[squash(stats.global_norm), stats.round_frac, stats.phase]);
        Ok(v)
    }

    pub fn logits(&self, stats: &UploadStats<T>) -> Result<Vec<T>> {
        self.logits_with(self.mlp.params().as_slice(), stats).map(|(a, _)| a)
    }

    pub(crate) fn logits_with(&self, params: &[T], stats: &UploadStats<T>) -> Result<(Vec<T>, MlpCache<T>)> {
        let x = self.features(stats)?;
        let (a, cache) = self.mlp.forward_with(params, &x)?;
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("allocator logits {a:?}")));
        }
        Ok((a, cache))
    }
}

/// Logits, softmax weights, energies and group scales for one upload.
pub fn allocate<T: Scalar>(
    stats: &UploadStats<T>,
    allocator: &AllocatorNet<T>,
    budget: T,
    masks: &GroupMaskSet,
) -> Result<NoisePlan<T>> {
    if !(budget > T::zero()) {
        return Err(Error::InvalidArgument(format!("budget must be positive, got {budget}")));
    }
    let logits = allocator.logits(stats)?;
    NoisePlan::from_weights(softmax(&logits), budget, &masks.sizes())
}
