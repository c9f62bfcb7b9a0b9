//! A federated-learning laboratory for tabular data.
//!
//! The lab trains a fixed MLP under five regimes — local-only, centralized,
//! plain federated averaging, federated averaging with per-client element-wise
//! affine input/output layers, and APFL — on CSV datasets partitioned by
//! client. The per-client affine layers double as diagnostics: stacked into
//! client-by-feature heatmaps they expose feature shifts, scale mismatches,
//! conditional missingness, and flipped labels without any raw data leaving a
//! client.
//!
//! Everything is deterministic: random streams are keyed by
//! `(seed, purpose, client, round)`, so identical configurations produce
//! byte-identical artifacts regardless of thread scheduling.

pub mod data;
pub mod error;
pub mod fed;
pub mod interpret;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use rng::Rng;
