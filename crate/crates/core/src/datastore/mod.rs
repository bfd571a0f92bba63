//! Dataset ingestion and normalization, configuration files, chain
//! persistence and report output.

pub mod chainio;
pub mod config;
pub mod csvio;
pub mod dataset;
pub mod report;

pub use chainio::{load_posterior, save_posterior};
pub use config::{load_config, AnalyticsDefaults, ReplicateCovariance, RunConfig};
pub use csvio::{load_covariate_table, load_dataset, load_dataset_with_control, CovariateTable, write_dataset, write_table, DEFAULT_CONTROL_LABEL};
pub use dataset::{ControlObs, ExposureDataset, Replicate};
