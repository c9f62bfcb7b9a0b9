//! Dataset ingestion and preprocessing: CSV parsing, standardization,
//! imputation, client partitioning, train/test splitting, class weighting,
//! and synthetic shift injection.

pub mod pipeline;
pub mod shift;
pub mod synthetic;
pub mod table;

pub use pipeline::{
    build_client_datasets, class_weights, impute_client, partition_by_client, split_train_test,
    standardize_client, standardize_global, test_size, ClientDataset, ClientTable, FederatedData,
    FitScope, PipelineOptions, StandardizeMode,
};
pub use shift::{Mutation, ShiftSpec};
pub use synthetic::{generate as generate_synthetic, partition_synthetic, SyntheticConfig};
pub use table::{load_csv, parse_csv, FeatureKind, RawTable, Schema};
