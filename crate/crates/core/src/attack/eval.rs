use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::radionet::GroupMaskSet;

use super::config::AttackConfig;
use super::fingerprint::extract_fingerprint;
use super::proxy::ProxyAttacker;
use super::trace::UploadTrace;

/// Anything that turns an observed trace into a location estimate.
pub trait Localizer {
    fn locate(&self, trace: &UploadTrace, fingerprint: &[f64]) -> Result<[f64; 2]>;
}

/// Root mean squared distance to the centroid of `coords`.
pub fn centroid_rmse(coords: &[[f64; 2]]) -> f64 {
    let n = coords.len() as f64;
    let cx = coords.iter().map(|c| c[0]).sum::<f64>() / n;
    let cy = coords.iter().map(|c| c[1]).sum::<f64>() / n;
    (coords
        .iter()
        .map(|c| (c[0] - cx).powi(2) + (c[1] - cy).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
}

/// Splits trace indices by map: a fraction `split` of the distinct maps
/// (at least one, and at least one left over) goes to the first part.
pub fn split_by_map<R: Rng + ?Sized>(map_ids: &[u16], split: f64, rng: &mut R) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut maps: Vec<u16> = map_ids.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if maps.len() < 2 {
        return Err(Error::InvalidArgument(
            "splitting by map needs at least two maps".into(),
        ));
    }
    maps.shuffle(rng);
    let k = ((split * maps.len() as f64).round() as usize).clamp(1, maps.len() - 1);
    let first: BTreeSet<u16> = maps[..k].iter().copied().collect();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (i, m) in map_ids.iter().enumerate() {
        if first.contains(m) {
            a.push(i);
        } else {
            b.push(i);
        }
    }
    Ok((a, b))
}

/// Training example for an evaluation attacker.
#[derive(Debug, Clone)]
pub struct Example {
    pub fingerprint: Vec<f64>,
    pub coord: [f64; 2],
    pub map_id: u16,
}

/// Evaluation attacker fitted by full-batch gradient descent with early
/// stopping on held-out maps.
#[derive(Debug, Clone)]
pub struct FittedAttacker {
    pub attacker: ProxyAttacker<f64>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl FittedAttacker {
    pub fn fit<R: Rng + ?Sized>(examples: &[Example], config: &AttackConfig, rng: &mut R) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::InvalidArgument("no training traces".into()));
        }
        let ids: Vec<u16> = examples.iter().map(|e| e.map_id).collect();
        let distinct = ids.iter().collect::<BTreeSet<_>>().len();
        let (fit_idx, hold_idx) = if config.holdout > 0.0 && distinct >= 2 {
            split_by_map(&ids, 1.0 - config.holdout, rng)?
        } else {
            ((0..examples.len()).collect(), Vec::new())
        };
        let fit: Vec<&Example> = fit_idx.iter().map(|&i| &examples[i]).collect();
        let hold: Vec<&Example> = hold_idx.iter().map(|&i| &examples[i]).collect();

        let coords: Vec<[f64; 2]> = fit.iter().map(|e| e.coord).collect();
        let n = coords.len() as f64;
        let offset = [
            coords.iter().map(|c| c[0]).sum::<f64>() / n,
            coords.iter().map(|c| c[1]).sum::<f64>() / n,
        ];
        let spread = centroid_rmse(&coords) / 2f64.sqrt();
        let scale = if spread > 1e-9 { spread } else { 1.0 };
        let inputs = fit[0].fingerprint.len();
        let mut attacker = ProxyAttacker::new(rng, inputs, config.hidden, offset, scale);
        let feats: Vec<Vec<f64>> = fit.iter().map(|e| e.fingerprint.clone()).collect();
        attacker.fit_normalizer(&feats)?;

        let fit_batch: Vec<(&[f64], [f64; 2])> = fit.iter().map(|e| (e.fingerprint.as_slice(), e.coord)).collect();
        let hold_batch: Vec<(&[f64], [f64; 2])> = hold.iter().map(|e| (e.fingerprint.as_slice(), e.coord)).collect();
        let score = |a: &ProxyAttacker<f64>| -> Result<f64> {
            if hold_batch.is_empty() {
                Ok(0.0)
            } else {
                a.loss(&hold_batch)
            }
        };
        let mut best = (score(&attacker)?, 0, attacker.clone());
        for epoch in 1..=config.epochs {
            attacker.train_step(&fit_batch, config.lr)?;
            if !hold_batch.is_empty() {
                let s = score(&attacker)?;
                if s < best.0 {
                    best = (s, epoch, attacker.clone());
                }
            }
        }
        if hold_batch.is_empty() {
            best = (0.0, config.epochs, attacker);
        }
        Ok(Self {
            attacker: best.2,
            best_epoch: best.1,
        })
    }
}

impl Localizer for FittedAttacker {
    fn locate(&self, _trace: &UploadTrace, fingerprint: &[f64]) -> Result<[f64; 2]> {
        self.attacker.predict(fingerprint)
    }
}

/// Splits `traces` by map, fits a localizer on the training maps with
/// `fit`, and returns its RMSE in meters on the remaining maps.
pub fn eval_attacker_with<R, L, F>(
    traces: &[UploadTrace],
    masks: &GroupMaskSet,
    config: &AttackConfig,
    rng: &mut R,
    fit: F,
) -> Result<f64>
where
    R: Rng + ?Sized,
    L: Localizer,
    F: FnOnce(&[Example], &mut R) -> Result<L>,
{
    if traces.len() < config.min_traces {
        return Err(Error::TooFewTraces {
            needed: config.min_traces,
            available: traces.len(),
        });
    }
    let ids: Vec<u16> = traces.iter().map(|t| t.map_id).collect();
    let (train, test) = split_by_map(&ids, config.split, rng)?;
    let fps = traces
        .iter()
        .map(|t| extract_fingerprint(t, masks))
        .collect::<Result<Vec<_>>>()?;
    let examples: Vec<Example> = train
        .iter()
        .map(|&i| Example {
            fingerprint: fps[i].clone(),
            coord: traces[i].true_coord_m,
            map_id: traces[i].map_id,
        })
        .collect();
    let model = fit(&examples, rng)?;
    let mut se = 0.0;
    for &i in &test {
        let p = model.locate(&traces[i], &fps[i])?;
        let c = traces[i].true_coord_m;
        se += (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
    }
    let rmse = (se / test.len() as f64).sqrt();
    if !rmse.is_finite() {
        return Err(Error::NonFinite("attacker RMSE".into()));
    }
    Ok(rmse)
}

/// Privacy RMSE in meters of a freshly trained attacker.
pub fn eval_attacker<R: Rng + ?Sized>(
    traces: &[UploadTrace],
    masks: &GroupMaskSet,
    config: &AttackConfig,
    rng: &mut R,
) -> Result<f64> {
    eval_attacker_with(traces, masks, config, rng, |ex, rng| {
        FittedAttacker::fit(ex, config, rng)
    })
}
