//! Federated training engine: client sampling, local training, FedSGD,
//! weighted aggregation and the aggregation-noise attenuation check.

mod aggregate;
mod client;

pub use aggregate::{aggregate, apply_update, noise_attenuation_check, AttenuationReport};
pub use client::{
    build_clients, fedsgd_step, local_train, phase_for_round, select_clients, ClientState, ClientUpdate, Phase,
    RoundPlan,
};
