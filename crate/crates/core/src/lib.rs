//! Federated radio map learning with upload privacy defenses.
//!
//! The crate simulates federated training of a small two-stage radio map
//! reconstruction network, a transmitter-localization attack that reads
//! client uploads, and a set of upload defenses ranging from plain clipping
//! to a budget-constrained adaptive noise allocator.
//!
//! The numeric core (`gradcore`, `radionet`, and the stateless parts of
//! `privacy`) is generic over [`Scalar`]; the simulator itself runs in
//! `f64`, and the aliases below name the concrete types it uses.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod error;
pub mod fedproto;
pub mod gradcore;
pub mod harness;
pub mod privacy;
pub mod radionet;
pub mod rng;
pub mod scalar;
pub mod synthdata;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Dense tensor in the simulator's working precision.
pub type Tensor = gradcore::Tensor<f64>;
/// Flat parameter vector in the simulator's working precision.
pub type ParamVector = gradcore::ParamVector<f64>;
/// Two-stage reconstruction network in the simulator's working precision.
pub type TwoStageNet = radionet::TwoStageNet<f64>;
/// Two-layer perceptron in the simulator's working precision.
pub type Mlp = gradcore::Mlp<f64>;
/// Upload statistics in the simulator's working precision.
pub type UploadStats = privacy::UploadStats<f64>;
/// Group noise plan in the simulator's working precision.
pub type NoisePlan = privacy::NoisePlan<f64>;

/// Single-precision variants, mainly useful for inference.
pub type Tensor32 = gradcore::Tensor<f32>;
pub type ParamVector32 = gradcore::ParamVector<f32>;
pub type TwoStageNet32 = radionet::TwoStageNet<f32>;
