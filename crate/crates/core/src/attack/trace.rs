use crate::error::{Error, Result};
use crate::gradcore::ParamVector;
use crate::radionet::{Objective, TwoStageNet};
use crate::synthdata::RadioSample;

/// Transmitted step deltas of one probe sample, with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct UploadTrace {
    pub steps: Vec<ParamVector<f64>>,
    pub true_coord_m: [f64; 2],
    pub client_id: usize,
    pub round: usize,
    /// Map the probe sample was drawn from; used to split attacker data.
    pub map_id: u16,
}

/// `steps` single-sample SGD steps from `global`; returns the per-step
/// deltas `theta_s - theta_{s-1}`.
pub fn collect_raw_steps(
    net: &TwoStageNet<f64>,
    global: &ParamVector<f64>,
    sample: &RadioSample,
    objective: Objective,
    lr: f64,
    steps: usize,
) -> Result<Vec<ParamVector<f64>>> {
    let input = sample.input_tensor();
    let target = sample.target_tensor();
    let mut theta = global.clone();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut g = ParamVector::zeros(theta.layout().clone());
        net.loss_and_grad(&theta, &input, &target, objective, &mut g)?;
        let delta = g.scaled(-lr);
        theta.axpy(1.0, &delta)?;
        out.push(delta);
    }
    Ok(out)
}

/// Records a probe trace: raw step deltas passed through `defend`, which
/// receives the step index and must return the transmitted vector.
#[allow(clippy::too_many_arguments)]
pub fn collect_trace<F>(
    net: &TwoStageNet<f64>,
    global: &ParamVector<f64>,
    sample: &RadioSample,
    objective: Objective,
    lr: f64,
    steps: usize,
    client_id: usize,
    round: usize,
    mut defend: F,
) -> Result<UploadTrace>
where
    F: FnMut(usize, &ParamVector<f64>) -> Result<ParamVector<f64>>,
{
    if steps == 0 {
        return Err(Error::InvalidArgument("a trace needs at least one step".into()));
    }
    let raw = collect_raw_steps(net, global, sample, objective, lr, steps)?;
    let steps = raw
        .iter()
        .enumerate()
        .map(|(s, d)| defend(s, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(UploadTrace {
        steps,
        true_coord_m: sample.tx_coord_m(),
        client_id,
        round,
        map_id: sample.map_id,
    })
}
