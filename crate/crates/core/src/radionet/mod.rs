//! Desk-scale two-stage reconstruction network.
//!
//! Stage 1 maps `(building, tx)` to a coarse pathloss estimate; stage 2
//! refines it from `(building, tx, coarse)`. Each stage is three 3x3 convs
//! with ReLU between them and a linear last layer. Both stages read the
//! transmitter raster directly, and the first-layer weights touching that
//! channel form the transmitter-coupled parameter groups.

mod masks;
mod net;

pub use masks::GroupMaskSet;
pub use net::{NetConfig, Objective, TwoStageNet, STAGE1_IN_CHANNELS, STAGE2_IN_CHANNELS, TX_CHANNEL};
