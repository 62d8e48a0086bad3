use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::radionet::{Objective, TwoStageNet};
use crate::synthdata::{Partition, RadioSample};
use crate::ParamVector;

/// Which stage a round trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Stage1,
    Stage2,
}

impl Phase {
    pub fn objective(self) -> Objective {
        match self {
            Phase::Stage1 => Objective::Stage1,
            Phase::Stage2 => Objective::Stage2,
        }
    }

    /// 0 for stage 1, 1 for stage 2.
    pub fn indicator(self) -> f64 {
        match self {
            Phase::Stage1 => 0.0,
            Phase::Stage2 => 1.0,
        }
    }
}

/// Rounds `[0, split)` train stage 1, the rest stage 2.
pub fn phase_for_round(round: usize, split: usize) -> Phase {
    if round < split {
        Phase::Stage1
    } else {
        Phase::Stage2
    }
}

#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: usize,
    pub shard: Vec<RadioSample>,
    /// `p_k`, proportional to the shard size.
    pub weight: f64,
}

/// One client per shard, weights normalized over all clients.
pub fn build_clients(samples: &[RadioSample], partition: &Partition) -> Vec<ClientState> {
    let total: usize = partition.shards.iter().map(Vec::len).sum();
    partition
        .shards
        .iter()
        .enumerate()
        .map(|(client_id, idx)| ClientState {
            client_id,
            shard: idx.iter().map(|&i| samples[i].clone()).collect(),
            weight: if total == 0 {
                0.0
            } else {
                idx.len() as f64 / total as f64
            },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundPlan {
    pub round: usize,
    pub total_rounds: usize,
    pub phase: Phase,
    pub selected: Vec<usize>,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub local_lr: f64,
}

/// Client upload for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub round: usize,
    pub delta: ParamVector,
    pub sample_count: usize,
    /// Mean minibatch loss seen during local training.
    pub train_loss: f64,
}

/// `m` distinct clients out of `k`, uniformly, in ascending id order.
pub fn select_clients<R: Rng + ?Sized>(rng: &mut R, k: usize, m: usize) -> Result<Vec<usize>> {
    if m == 0 || m > k {
        return Err(Error::InvalidArgument(format!("cannot select {m} of {k} clients")));
    }
    let mut v = index::sample(rng, k, m).into_vec();
    v.sort_unstable();
    Ok(v)
}

fn minibatch_step(
    net: &TwoStageNet<f64>,
    params: &mut ParamVector,
    batch: &[&RadioSample],
    objective: Objective,
    lr: f64,
) -> Result<f64> {
    let mut grads = ParamVector::zeros(params.layout().clone());
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for s in batch {
        loss += net.loss_and_grad_scaled(
            params,
            &s.input_tensor(),
            &s.target_tensor(),
            objective,
            scale,
            &mut grads,
        )?;
    }
    params.axpy(-lr, &grads)?;
    Ok(loss * scale)
}

/// Runs `plan.local_epochs` epochs of shuffled minibatch SGD on the active
/// stage and returns `local - global`.
pub fn local_train<R: Rng + ?Sized>(
    net: &TwoStageNet<f64>,
    global: &ParamVector,
    client: &ClientState,
    plan: &RoundPlan,
    rng: &mut R,
) -> Result<ClientUpdate> {
    if client.shard.is_empty() {
        return Err(Error::EmptyShard(client.client_id));
    }
    if plan.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let objective = plan.phase.objective();
    let mut local = global.clone();
    let mut order: Vec<usize> = (0..client.shard.len()).collect();
    let (mut loss_sum, mut steps) = (0.0, 0usize);
    for _ in 0..plan.local_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(plan.batch_size) {
            let batch: Vec<&RadioSample> = chunk.iter().map(|&i| &client.shard[i]).collect();
            loss_sum += minibatch_step(net, &mut local, &batch, objective, plan.local_lr)?;
            steps += 1;
        }
    }
    Ok(ClientUpdate {
        client_id: client.client_id,
        round: plan.round,
        delta: local.sub(global)?,
        sample_count: client.shard.len(),
        train_loss: if steps == 0 { 0.0 } else { loss_sum / steps as f64 },
    })
}

/// Vanilla FedSGD: one SGD step on one shuffled minibatch, both stages
/// trained through the composed loss.
pub fn fedsgd_step<R: Rng + ?Sized>(
    net: &TwoStageNet<f64>,
    global: &ParamVector,
    client: &ClientState,
    plan: &RoundPlan,
    rng: &mut R,
) -> Result<ClientUpdate> {
    if client.shard.is_empty() {
        return Err(Error::EmptyShard(client.client_id));
    }
    if plan.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..client.shard.len()).collect();
    order.shuffle(rng);
    let batch: Vec<&RadioSample> = order.iter().take(plan.batch_size).map(|&i| &client.shard[i]).collect();
    let mut local = global.clone();
    let loss = minibatch_step(net, &mut local, &batch, Objective::Composed, plan.local_lr)?;
    Ok(ClientUpdate {
        client_id: client.client_id,
        round: plan.round,
        delta: local.sub(global)?,
        sample_count: client.shard.len(),
        train_loss: loss,
    })
}
