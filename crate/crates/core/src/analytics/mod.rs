//! Post-fit analyses and synthetic data.

pub mod dependence;
pub mod loco;
pub mod predictive;
pub mod sensitivity;
pub mod simulate;

pub use dependence::{default_grid, partial_dependence, partial_dependence_2var, PartialDependence};
pub use loco::{isolated_covariates, loco_validation, LocoFold, LocoReport};
pub use predictive::{
    pooled_coverage, posterior_predictive, predictive_check, quantile_sorted, score_coverage, CoverageRow,
    PredictiveSummary,
};
pub use sensitivity::{sensitivity_indices, sobol_indices, IndexEstimate, SensitivityMode, SensitivityOptions, SensitivityReport};
pub use simulate::{latin_hypercube, simulate_dataset, GeneratorSpec, GroundTruth, SigmoidCurve, ASSAY_DOSES};
