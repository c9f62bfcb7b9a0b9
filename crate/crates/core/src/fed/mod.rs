//! The simulated federation: round protocol, training regimes, experiment
//! driver, artifact layout, and the synthetic detection harness.

pub mod artifacts;
pub mod client;
pub mod config;
pub mod detect;
pub mod experiment;
pub mod server;

pub use client::{apfl_step, local_epoch, ApflState, ClientState, ClientUpdate, EpochSettings};
pub use config::{Algorithm, ExperimentConfig, DEFAULT_SEEDS};
pub use detect::{run_synthetic_detection, DetectionOutcome, MutationReport, SeedVerdict};
pub use experiment::{prepare_data, run_experiment, run_seed, RunArtifacts, SeedRun};
pub use server::{aggregate_uniform, score_client, FederationState};
