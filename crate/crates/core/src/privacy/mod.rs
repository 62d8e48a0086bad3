//! Upload defenses.
//!
//! Every noise-based scheme clips the client delta to an l2 ball of radius
//! `C` and then spends the same second-moment budget `B = d * (C * nu)^2`:
//! spread evenly over all coordinates (uniform), concentrated on the
//! transmitter-coupled groups (directed), or split across groups by a small
//! allocator network that reads summary statistics of the upload (adaptive).

mod allocator;
mod clip;
mod config;
mod defense;
mod noise;
mod stats;
mod train;

pub use allocator::{allocate, entropy, softmax, AllocatorNet, NoisePlan, ALLOCATOR_HIDDEN};
pub use clip::{clip, clip_with_flag};
pub use config::{DefenseConfig, Scheme};
pub use defense::{apply_defense, directed_plan, uniform_plan, DefendedUpload};
pub use noise::{
    add_group_noise, directed_sigma, directed_sigmas, privatize_adaptive, privatize_directed, privatize_uniform,
    standard_normal_vec, SENSITIVE_GROUPS,
};
pub use stats::{extract_stats, GroupStats, UploadStats};
pub use train::{allocator_objective, allocator_update, AllocatorObjective, AllocatorStep, ProbeRecord, TaskContext};
