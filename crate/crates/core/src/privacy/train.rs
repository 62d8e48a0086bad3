use crate::attack::{fingerprint, fingerprint_backward, ProxyAttacker};
use crate::error::{Error, Result};
use crate::gradcore::ParamVector;
use crate::radionet::{GroupMaskSet, Objective, TwoStageNet};
use crate::synthdata::RadioSample;

use super::allocator::{entropy, softmax, AllocatorNet};
use super::clip::clip;
use super::stats::{extract_stats, UploadStats};

/// A client's probe trace before noise: clipped step deltas, the
/// statistics the allocator sees for each step, and the true location.
#[derive(Debug, Clone)]
pub struct ProbeRecord {
    pub steps: Vec<ParamVector<f64>>,
    pub stats: Vec<UploadStats<f64>>,
    pub coord: [f64; 2],
}

impl ProbeRecord {
    pub fn new(
        raw_steps: &[ParamVector<f64>],
        clip_c: f64,
        masks: &GroupMaskSet,
        round: usize,
        total_rounds: usize,
        phase_indicator: f64,
        coord: [f64; 2],
    ) -> Result<Self> {
        let steps: Vec<ParamVector<f64>> = raw_steps.iter().map(|d| clip(d, clip_c)).collect();
        let stats = steps
            .iter()
            .map(|s| extract_stats(s, masks, round, total_rounds, phase_indicator))
            .collect::<Result<_>>()?;
        Ok(Self { steps, stats, coord })
    }
}

/// Frozen model snapshot and local batch for the one-step lookahead task term.
#[derive(Debug, Clone, Copy)]
pub struct TaskContext<'a> {
    pub net: &'a TwoStageNet<f64>,
    pub snapshot: &'a ParamVector<f64>,
    pub batch: &'a [RadioSample],
    pub objective: Objective,
}

/// Everything the allocator objective depends on besides the allocator
/// parameters. All noise directions are fixed for the duration of a step.
#[derive(Debug, Clone, Copy)]
pub struct AllocatorObjective<'a> {
    pub masks: &'a GroupMaskSet,
    pub budget: f64,
    pub lambda_p: f64,
    pub lambda_h: f64,
    /// Clipped upload and its statistics.
    pub upload: &'a ParamVector<f64>,
    pub upload_stats: &'a UploadStats<f64>,
    /// Noise direction for the upload, one standard normal per coordinate.
    pub upload_eps: &'a [f64],
    pub task: Option<TaskContext<'a>>,
    pub probes: &'a [ProbeRecord],
    /// `probe_eps[p][s]`: noise direction for step `s` of probe `p`.
    pub probe_eps: &'a [Vec<Vec<f64>>],
    pub proxy: Option<&'a ProxyAttacker<f64>>,
}

/// Value, gradient and parts of the allocator objective at one point.
#[derive(Debug, Clone)]
pub struct AllocatorStep {
    pub value: f64,
    pub task: f64,
    pub proxy: f64,
    pub entropy: f64,
    pub weights: Vec<f64>,
    pub grad: Vec<f64>,
}

fn sigmas(w: &[f64], budget: f64, masks: &GroupMaskSet) -> Vec<f64> {
    w.iter()
        .enumerate()
        .map(|(g, &wg)| (budget * wg / masks.size(g) as f64).max(0.0).sqrt())
        .collect()
}

/// Chain rule from `dL/dsigma` to the logits, using
/// `dsigma_g/da_j = sigma_g / 2 * (delta_gj - w_j)`.
fn sigma_to_logits(d_sigma: &[f64], sigma: &[f64], w: &[f64]) -> Vec<f64> {
    let half: Vec<f64> = d_sigma.iter().zip(sigma).map(|(d, s)| 0.5 * d * s).collect();
    let total: f64 = half.iter().sum();
    half.iter().zip(w).map(|(h, wj)| h - wj * total).collect()
}

/// `dH/da_j = -w_j (ln w_j + H)`
fn entropy_to_logits(w: &[f64]) -> Vec<f64> {
    let h = entropy(w);
    w.iter()
        .map(|&wj| if wj > 0.0 { -wj * (wj.ln() + h) } else { 0.0 })
        .collect()
}

fn group_projection(grad_x: &[f64], eps: &[f64], masks: &GroupMaskSet) -> Vec<f64> {
    let mut out = vec![0.0; masks.len()];
    for ((g, e), &k) in grad_x.iter().zip(eps).zip(masks.assignment()) {
        out[k] += g * e;
    }
    out
}

/// `L_task - lambda_p L_proxy - lambda_h H(w)` at allocator parameters
/// `eta`, with its gradient.
pub fn allocator_objective(alloc: &AllocatorNet<f64>, eta: &[f64], obj: &AllocatorObjective) -> Result<AllocatorStep> {
    let masks = obj.masks;
    let d = masks.dim();
    if obj.upload.len() != d || obj.upload_eps.len() != d {
        return Err(Error::ShapeMismatch("allocator objective upload".into()));
    }
    let mut grad = vec![0.0; eta.len()];

    let (logits, cache) = alloc.logits_with(eta, obj.upload_stats)?;
    let w = softmax(&logits);
    let sig = sigmas(&w, obj.budget, masks);
    let h = entropy(&w);
    let mut g_logits: Vec<f64> = entropy_to_logits(&w).iter().map(|v| -obj.lambda_h * v).collect();

    let mut task = 0.0;
    if let Some(t) = obj.task {
        if t.batch.is_empty() {
            return Err(Error::InvalidArgument("empty allocator task batch".into()));
        }
        let mut theta = t.snapshot.add(obj.upload)?;
        for ((v, e), &g) in theta
            .as_mut_slice()
            .iter_mut()
            .zip(obj.upload_eps)
            .zip(masks.assignment())
        {
            *v += sig[g] * e;
        }
        let mut g_theta = ParamVector::zeros(theta.layout().clone());
        let scale = 1.0 / t.batch.len() as f64;
        for s in t.batch {
            task += scale
                * t.net.loss_and_grad_scaled(
                    &theta,
                    &s.input_tensor(),
                    &s.target_tensor(),
                    t.objective,
                    scale,
                    &mut g_theta,
                )?;
        }
        let d_sigma = group_projection(g_theta.as_slice(), obj.upload_eps, masks);
        for (a, b) in g_logits.iter_mut().zip(sigma_to_logits(&d_sigma, &sig, &w)) {
            *a += b;
        }
    }
    alloc.mlp().backward_with(eta, &cache, &g_logits, &mut grad)?;

    let mut proxy_loss = 0.0;
    if let Some(proxy) = obj.proxy.filter(|_| !obj.probes.is_empty()) {
        if obj.probe_eps.len() != obj.probes.len() {
            return Err(Error::ShapeMismatch("one noise set per probe".into()));
        }
        let np = obj.probes.len() as f64;
        for (p, eps) in obj.probes.iter().zip(obj.probe_eps) {
            if eps.len() != p.steps.len() || p.stats.len() != p.steps.len() {
                return Err(Error::ShapeMismatch("probe steps".into()));
            }
            let mut noisy = Vec::with_capacity(p.steps.len());
            let mut plans = Vec::with_capacity(p.steps.len());
            for ((step, stats), e) in p.steps.iter().zip(&p.stats).zip(eps) {
                let (a, c) = alloc.logits_with(eta, stats)?;
                let ws = softmax(&a);
                let ss = sigmas(&ws, obj.budget, masks);
                let x: Vec<f64> = step
                    .as_slice()
                    .iter()
                    .zip(e)
                    .zip(masks.assignment())
                    .map(|((v, n), &g)| v + ss[g] * n)
                    .collect();
                noisy.push(x);
                plans.push((ws, ss, c));
            }
            let refs: Vec<&[f64]> = noisy.iter().map(|v| v.as_slice()).collect();
            let fp = fingerprint(&refs, masks)?;
            let (l, gfp) = proxy.loss_with(proxy.mlp().params().as_slice(), &[(&fp, p.coord)], None)?;
            proxy_loss += l / np;
            let gx = fingerprint_backward(&refs, masks, &gfp[0])?;
            for ((gxs, e), (ws, ss, c)) in gx.iter().zip(eps).zip(&plans) {
                let d_sigma = group_projection(gxs, e, masks);
                let ga: Vec<f64> = sigma_to_logits(&d_sigma, ss, ws)
                    .iter()
                    .map(|v| -obj.lambda_p * v / np)
                    .collect();
                alloc.mlp().backward_with(eta, c, &ga, &mut grad)?;
            }
        }
    }

    let value = task - obj.lambda_p * proxy_loss - obj.lambda_h * h;
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!(
            "allocator objective (task {task}, proxy {proxy_loss}, entropy {h})"
        )));
    }
    Ok(AllocatorStep {
        value,
        task,
        proxy: proxy_loss,
        entropy: h,
        weights: w,
        grad,
    })
}

/// One gradient step on the allocator objective, with the gradient rescaled
/// to l2 norm at most `max_grad_norm`.
pub fn allocator_update(
    alloc: &mut AllocatorNet<f64>,
    obj: &AllocatorObjective,
    lr: f64,
    max_grad_norm: f64,
) -> Result<AllocatorStep> {
    let step = allocator_objective(alloc, alloc.mlp().params().as_slice(), obj)?;
    let norm = step.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let scale = if norm > max_grad_norm {
        max_grad_norm / norm
    } else {
        1.0
    };
    for (p, g) in alloc.mlp_mut().params_mut().as_mut_slice().iter_mut().zip(&step.grad) {
        *p -= lr * scale * g;
    }
    Ok(step)
}
