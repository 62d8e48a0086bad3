use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::ParamVector;

use super::ClientUpdate;

/// Sample-count weighted mean of the uploaded deltas. With equal counts this
/// is the plain average over participants.
pub fn aggregate(updates: &[ClientUpdate]) -> Result<ParamVector> {
    let first = updates.first().ok_or(Error::EmptyUpdates)?;
    let total: usize = updates.iter().map(|u| u.sample_count).sum();
    if total == 0 {
        return Err(Error::InvalidArgument("participants report zero samples".into()));
    }
    let mut out = ParamVector::zeros(first.delta.layout().clone());
    for u in updates {
        out.axpy(u.sample_count as f64 / total as f64, &u.delta)?;
    }
    Ok(out)
}

/// `global + server_lr * aggregate`.
pub fn apply_update(global: &mut ParamVector, aggregate: &ParamVector, server_lr: f64) -> Result<()> {
    global.axpy(server_lr, aggregate)
}

/// Monte-Carlo estimate of the spread of averaged client noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttenuationReport {
    pub empirical_std: f64,
    pub empirical_mean: f64,
    /// `sigma / sqrt(K_r)`
    pub expected_std: f64,
}

/// Averages `k_r` independent `N(0, sigma^2)` draws per trial and reports the
/// per-coordinate mean and standard deviation over `trials` trials.
pub fn noise_attenuation_check<R: Rng + ?Sized>(
    sigma: f64,
    k_r: usize,
    trials: usize,
    rng: &mut R,
) -> Result<AttenuationReport> {
    if trials < 1000 {
        return Err(Error::InvalidArgument(format!(
            "need at least 1000 trials, got {trials}"
        )));
    }
    if k_r == 0 {
        return Err(Error::InvalidArgument("k_r must be positive".into()));
    }
    let avgs: Vec<f64> = (0..trials)
        .map(|_| {
            let s: f64 = (0..k_r).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).sum();
            s / k_r as f64
        })
        .collect();
    let mean = avgs.iter().sum::<f64>() / trials as f64;
    let var = avgs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    Ok(AttenuationReport {
        empirical_std: var.sqrt(),
        empirical_mean: mean,
        expected_std: sigma / (k_r as f64).sqrt(),
    })
}
