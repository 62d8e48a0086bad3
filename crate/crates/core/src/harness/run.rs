use rand::seq::index;
use rayon::prelude::*;

use crate::attack::{
    collect_raw_steps, eval_attacker, extract_fingerprint, fingerprint_len, ProxyAttacker, UploadTrace,
};
use crate::error::{Error, Result};
use crate::fedproto::{
    aggregate, apply_update, build_clients, fedsgd_step, local_train, phase_for_round, select_clients, ClientState,
    ClientUpdate, Phase, RoundPlan,
};
use crate::privacy::{
    allocator_update, apply_defense, clip, standard_normal_vec, AllocatorNet, AllocatorObjective, DefenseConfig,
    NoisePlan, ProbeRecord, Scheme, TaskContext, ALLOCATOR_HIDDEN,
};
use crate::radionet::{GroupMaskSet, Objective, TwoStageNet};
use crate::rng::{Purpose, StreamKey};
use crate::synthdata::{generate_dataset, partition_clients, RadioSample};
use crate::ParamVector;

use super::config::ExperimentConfig;
use super::metrics::{mse_db, MetricsRow};

/// Everything one (scheme, seed) run produced.
#[derive(Debug, Clone)]
pub struct SchemeRun {
    pub rows: Vec<MetricsRow>,
    /// Probe traces, kept only when requested.
    pub traces: Vec<UploadTrace>,
}

/// Per-client state of the adaptive defense.
#[derive(Debug, Clone)]
struct AdaptiveState {
    allocator: AllocatorNet<f64>,
    proxy: ProxyAttacker<f64>,
    /// Fingerprints of the client's own transmitted probe traces.
    buffer: Vec<(Vec<f64>, [f64; 2])>,
}

struct RoundCtx<'a> {
    cfg: &'a ExperimentConfig,
    defense: DefenseConfig,
    net: &'a TwoStageNet<f64>,
    masks: &'a GroupMaskSet,
    global: &'a ParamVector,
    plan: RoundPlan,
    seed: u64,
}

struct ClientOutcome {
    update: ClientUpdate,
    plan: Option<NoisePlan<f64>>,
    traces: Vec<UploadTrace>,
}

impl RoundCtx<'_> {
    fn key(&self, purpose: Purpose, client: usize) -> StreamKey {
        StreamKey::new(self.seed, purpose).round(self.plan.round).client(client)
    }

    fn train_objective(&self) -> Objective {
        if self.defense.scheme == Scheme::FedSgd {
            Objective::Composed
        } else {
            self.plan.phase.objective()
        }
    }

    fn defend(
        &self,
        delta: &ParamVector,
        state: Option<&AdaptiveState>,
        key: StreamKey,
    ) -> Result<crate::privacy::DefendedUpload<f64>> {
        apply_defense(
            delta,
            &self.defense,
            self.masks,
            state.map(|s| &s.allocator),
            self.plan.round,
            self.plan.total_rounds,
            self.plan.phase.indicator(),
            &mut key.stream(),
        )
    }

    fn client_round(&self, client: &ClientState, state: Option<&mut AdaptiveState>) -> Result<ClientOutcome> {
        let k = client.client_id;
        let mut shuffle = self.key(Purpose::Shuffle, k).stream();
        let raw = if self.defense.scheme == Scheme::FedSgd {
            fedsgd_step(self.net, self.global, client, &self.plan, &mut shuffle)?
        } else {
            local_train(self.net, self.global, client, &self.plan, &mut shuffle)?
        };
        let defended = self.defend(&raw.delta, state.as_deref(), self.key(Purpose::UploadNoise, k))?;

        let attack = &self.cfg.attack;
        let s_steps = attack.steps;
        let n_probes = attack.probes_per_client.min(client.shard.len());
        let picks = index::sample(&mut self.key(Purpose::Probe, k).stream(), client.shard.len(), n_probes).into_vec();
        let mut traces = Vec::with_capacity(n_probes);
        let mut records = Vec::new();
        for (p, &i) in picks.iter().enumerate() {
            let sample = &client.shard[i];
            let steps = collect_raw_steps(
                self.net,
                self.global,
                sample,
                self.train_objective(),
                self.plan.local_lr,
                s_steps,
            )?;
            let sent = steps
                .iter()
                .enumerate()
                .map(|(s, d)| {
                    let key = self.key(Purpose::TraceNoise, k).index((p * s_steps + s) as u64);
                    self.defend(d, state.as_deref(), key).map(|u| u.upload)
                })
                .collect::<Result<Vec<_>>>()?;
            if state.is_some() {
                records.push(ProbeRecord::new(
                    &steps,
                    self.defense.clip,
                    self.masks,
                    self.plan.round,
                    self.plan.total_rounds,
                    self.plan.phase.indicator(),
                    sample.tx_coord_m(),
                )?);
            }
            traces.push(UploadTrace {
                steps: sent,
                true_coord_m: sample.tx_coord_m(),
                client_id: k,
                round: self.plan.round,
                map_id: sample.map_id,
            });
        }

        if let Some(st) = state {
            self.train_adaptive(client, st, &raw, &defended, &traces, &records)?;
        }

        Ok(ClientOutcome {
            update: ClientUpdate {
                delta: defended.upload,
                ..raw
            },
            plan: defended.plan,
            traces,
        })
    }

    /// Proxy steps on the client's trace buffer, then allocator steps.
    fn train_adaptive(
        &self,
        client: &ClientState,
        st: &mut AdaptiveState,
        raw: &ClientUpdate,
        defended: &crate::privacy::DefendedUpload<f64>,
        traces: &[UploadTrace],
        records: &[ProbeRecord],
    ) -> Result<()> {
        let k = client.client_id;
        for t in traces {
            st.buffer.push((extract_fingerprint(t, self.masks)?, t.true_coord_m));
        }
        if !st.buffer.is_empty() {
            let feats: Vec<Vec<f64>> = st.buffer.iter().map(|(f, _)| f.clone()).collect();
            st.proxy.fit_normalizer(&feats)?;
            let batch: Vec<(&[f64], [f64; 2])> = st.buffer.iter().map(|(f, c)| (f.as_slice(), *c)).collect();
            for _ in 0..self.defense.proxy_steps_per_round {
                st.proxy.train_step(&batch, self.defense.proxy_lr)?;
            }
        }

        let n_eval = self.defense.allocator_eval_batch.min(client.shard.len());
        let eval: Vec<RadioSample> = index::sample(
            &mut self.key(Purpose::EvalBatch, k).stream(),
            client.shard.len(),
            n_eval,
        )
        .into_iter()
        .map(|i| client.shard[i].clone())
        .collect();
        let upload = clip(&raw.delta, self.defense.clip);
        let stats = defended
            .stats
            .clone()
            .ok_or_else(|| Error::InvalidArgument("adaptive upload without statistics".into()))?;
        let task_objective = match self.plan.phase {
            Phase::Stage1 => Objective::Stage1,
            Phase::Stage2 => Objective::Composed,
        };
        let d = self.masks.dim();
        for step in 0..self.defense.allocator_steps_per_round {
            let mut rng = self.key(Purpose::AllocNoise, k).index(step as u64).stream();
            let upload_eps = standard_normal_vec(&mut rng, d);
            let probe_eps: Vec<Vec<Vec<f64>>> = records
                .iter()
                .map(|r| r.steps.iter().map(|_| standard_normal_vec(&mut rng, d)).collect())
                .collect();
            let obj = AllocatorObjective {
                masks: self.masks,
                budget: self.defense.budget(d),
                lambda_p: self.defense.lambda_p,
                lambda_h: self.defense.lambda_h,
                upload: &upload,
                upload_stats: &stats,
                upload_eps: &upload_eps,
                task: Some(TaskContext {
                    net: self.net,
                    snapshot: self.global,
                    batch: &eval,
                    objective: task_objective,
                }),
                probes: records,
                probe_eps: &probe_eps,
                proxy: Some(&st.proxy),
            };
            allocator_update(
                &mut st.allocator,
                &obj,
                self.defense.allocator_lr,
                self.defense.allocator_grad_clip,
            )?;
        }
        Ok(())
    }
}

fn mean_vectors<'a>(vs: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut sum: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for v in vs {
        if sum.is_empty() {
            sum = vec![0.0; v.len()];
        }
        for (a, b) in sum.iter_mut().zip(v) {
            *a += b;
        }
        n += 1;
    }
    sum.iter().map(|s| s / n.max(1) as f64).collect()
}

fn validation_mse(net: &TwoStageNet<f64>, params: &ParamVector, val: &[RadioSample]) -> Result<f64> {
    let mut total = 0.0;
    for s in val {
        total += net.loss(params, &s.input_tensor(), &s.target_tensor(), Objective::Composed)?;
    }
    Ok(total / val.len() as f64)
}

/// Full pipeline for one scheme and master seed; one metrics row per round.
pub fn run_scheme(cfg: &ExperimentConfig, scheme: Scheme, seed: u64, keep_traces: bool) -> Result<SchemeRun> {
    run_scheme_inner(cfg, scheme, seed, keep_traces).map_err(|e| e.context(format!("scheme {scheme}, seed {seed}")))
}

fn run_scheme_inner(cfg: &ExperimentConfig, scheme: Scheme, seed: u64, keep_traces: bool) -> Result<SchemeRun> {
    cfg.validate()?;
    let ds = &cfg.dataset;
    let fed = &cfg.federated;
    let data = generate_dataset(ds.seed.unwrap_or(seed), &ds.spec, ds.maps, ds.tx_per_map)?;
    let part = partition_clients(
        &data,
        ds.clients,
        ds.validation_maps,
        &mut StreamKey::new(seed, Purpose::Partition).stream(),
    )?;
    let clients = build_clients(&data, &part);
    let val: Vec<RadioSample> = part.validation.iter().map(|&i| data[i].clone()).collect();
    drop(data);

    let net = TwoStageNet::<f64>::new(cfg.model)?;
    let masks = net.build_group_masks();
    let mut global = net.init_params(&mut StreamKey::new(seed, Purpose::Init).stream());
    let defense = DefenseConfig {
        scheme,
        ..cfg.defense.clone()
    };
    let extent = [ds.spec.extent_x_m(), ds.spec.extent_y_m()];
    let mut states: Vec<Option<AdaptiveState>> = (0..clients.len())
        .map(|k| {
            (scheme == Scheme::Adaptive).then(|| AdaptiveState {
                allocator: AllocatorNet::init(
                    &mut StreamKey::new(seed, Purpose::AllocatorInit).client(k).stream(),
                    masks.len(),
                    ALLOCATOR_HIDDEN,
                ),
                proxy: ProxyAttacker::new(
                    &mut StreamKey::new(seed, Purpose::AttackInit).client(k).stream(),
                    fingerprint_len(masks.len(), cfg.attack.steps),
                    cfg.attack.hidden,
                    [extent[0] / 2.0, extent[1] / 2.0],
                    extent[0].max(extent[1]) / 2.0,
                ),
                buffer: Vec::new(),
            })
        })
        .collect();

    let mut rows = Vec::with_capacity(fed.rounds);
    let mut traces: Vec<UploadTrace> = Vec::new();
    for r in 0..fed.rounds {
        let round_err = |e: Error| e.context(format!("round {r}"));
        let phase = phase_for_round(r, fed.split());
        let selected = select_clients(
            &mut StreamKey::new(seed, Purpose::Select).round(r).stream(),
            clients.len(),
            fed.clients_per_round,
        )
        .map_err(round_err)?;
        let ctx = RoundCtx {
            cfg,
            defense: defense.clone(),
            net: &net,
            masks: &masks,
            global: &global,
            plan: RoundPlan {
                round: r,
                total_rounds: fed.rounds,
                phase,
                selected: selected.clone(),
                local_epochs: fed.local_epochs,
                batch_size: fed.batch_size,
                local_lr: fed.local_lr,
            },
            seed,
        };
        let outcomes: Vec<ClientOutcome> = states
            .par_iter_mut()
            .zip(clients.par_iter())
            .filter(|(_, c)| selected.binary_search(&c.client_id).is_ok())
            .map(|(st, c)| ctx.client_round(c, st.as_mut()))
            .collect::<Result<_>>()
            .map_err(round_err)?;
        drop(ctx);

        let updates: Vec<ClientUpdate> = outcomes.iter().map(|o| o.update.clone()).collect();
        let agg = aggregate(&updates).map_err(round_err)?;
        apply_update(&mut global, &agg, fed.server_lr).map_err(round_err)?;
        if !global.is_finite() {
            return Err(round_err(Error::NonFinite("global model diverged".into())));
        }

        let total: usize = updates.iter().map(|u| u.sample_count).sum();
        let train_mse = updates
            .iter()
            .map(|u| u.train_loss * u.sample_count as f64)
            .sum::<f64>()
            / total as f64;
        let val_mse = validation_mse(&net, &global, &val).map_err(round_err)?;
        let val_mse_db = mse_db(val_mse).map_err(|e| round_err(Error::NonFinite(e.to_string())))?;

        let plans: Vec<&NoisePlan<f64>> = outcomes.iter().filter_map(|o| o.plan.as_ref()).collect();
        let weights = mean_vectors(plans.iter().map(|p| p.weights.as_slice()));
        let sigmas = mean_vectors(plans.iter().map(|p| p.sigmas.as_slice()));

        for o in outcomes {
            traces.extend(o.traces);
        }
        let privacy_rmse_m = if traces.len() >= cfg.attack.min_traces {
            let mut rng = StreamKey::new(seed, Purpose::AttackSplit).round(r).stream();
            Some(eval_attacker(&traces, &masks, &cfg.attack, &mut rng).map_err(round_err)?)
        } else {
            None
        };

        rows.push(MetricsRow {
            scheme,
            seed,
            round: r,
            train_mse,
            val_mse,
            val_mse_db,
            privacy_rmse_m,
            weights,
            sigmas,
        });
    }
    if !keep_traces {
        traces.clear();
    }
    Ok(SchemeRun { rows, traces })
}

/// Outcome of one (scheme, seed) cell of a comparison.
#[derive(Debug)]
pub struct Cell {
    pub scheme: Scheme,
    pub seed: u64,
    pub result: Result<SchemeRun>,
}

/// Runs every configured (scheme, seed) cell on a pool of `cfg.run.jobs`
/// threads. Cells come back ordered by (scheme, seed) as configured.
pub fn run_comparison(cfg: &ExperimentConfig, keep_traces: bool) -> Result<Vec<Cell>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let jobs: Vec<(Scheme, u64)> = cfg
        .run
        .schemes
        .iter()
        .flat_map(|&s| cfg.run.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    Ok(pool.install(|| {
        jobs.par_iter()
            .map(|&(scheme, seed)| Cell {
                scheme,
                seed,
                result: run_scheme(cfg, scheme, seed, keep_traces),
            })
            .collect()
    }))
}
