//! Transmitter localization from client uploads: trace collection,
//! fingerprints, the in-loop proxy attacker and the post-hoc evaluation
//! attacker.

mod config;
mod dump;
mod eval;
mod fingerprint;
mod proxy;
mod trace;

pub use config::AttackConfig;
pub use dump::{read_traces, write_traces, DumpedTrace, TRACE_MAGIC, TRACE_VERSION};
pub use eval::{centroid_rmse, eval_attacker, eval_attacker_with, split_by_map, Example, FittedAttacker, Localizer};
pub use fingerprint::{extract_fingerprint, fingerprint, fingerprint_backward, fingerprint_len};
pub use proxy::ProxyAttacker;
pub use trace::{collect_raw_steps, collect_trace, UploadTrace};
