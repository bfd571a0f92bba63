//! Fixed ingredients of a fit: data, spline system, penalty and
//! correlation geometry.

use nalgebra::{DMatrix, DVector};

use super::{CorrelationPriorSpec, McmcConfig};
use crate::basis::{design_matrix, Grid1D, SplineSettings, SplineSystem};
use crate::datastore::{ExposureDataset, Replicate};
use crate::error::Result;
use crate::likelihood::{CorrelationPriorParams, CorrelationStructure, DistanceMode, PenaltyFactor, PhiPrior};

/// Everything besides the draws that is needed to evaluate a fitted
/// model: grids, spline settings and training covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelContext {
    pub spline: SplineSettings,
    pub distance: DistanceMode,
    pub dose: Grid1D,
    pub time: Option<Grid1D>,
    pub particles: Vec<String>,
    pub covariate_names: Vec<String>,
    pub log_scale: Vec<bool>,
    pub covariates: Vec<Vec<f64>>,
}

impl ModelContext {
    pub fn from_dataset(data: &ExposureDataset, spline: SplineSettings, distance: DistanceMode) -> Self {
        Self {
            spline,
            distance,
            dose: data.dose.clone(),
            time: data.time.clone(),
            particles: data.particles.clone(),
            covariate_names: data.covariate_names.clone(),
            log_scale: data.log_scale.clone(),
            covariates: data.covariates.clone(),
        }
    }

    pub fn system(&self) -> Result<SplineSystem> {
        SplineSystem::new(&self.spline, self.dose.clone(), self.time.clone())
    }

    pub fn correlation(&self) -> CorrelationStructure {
        CorrelationStructure::new(&self.dose, self.time.as_ref(), self.distance)
    }

    pub fn n_dose(&self) -> usize {
        self.dose.len()
    }

    pub fn n_time(&self) -> usize {
        self.time.as_ref().map_or(1, |t| t.len())
    }

    pub fn n_cells(&self) -> usize {
        self.n_dose() * self.n_time()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn covariate_ranges(&self) -> Vec<(f64, f64)> {
        crate::datastore::dataset::covariate_ranges(&self.covariates, self.n_covariates())
    }
}

/// Data and precomputed matrices shared by every sweep of a chain.
#[derive(Debug, Clone)]
pub struct Model {
    pub context: ModelContext,
    pub system: SplineSystem,
    pub design: DMatrix<f64>,
    pub penalty: PenaltyFactor,
    pub corr: CorrelationStructure,
    pub phi_priors: CorrelationPriorParams,
    pub responses: Vec<Vec<Replicate>>,
    pub n_obs: usize,
}

impl Model {
    pub fn new(data: &ExposureDataset, spline: SplineSettings, distance: DistanceMode, config: &McmcConfig) -> Result<Self> {
        data.validate("dataset")?;
        let spline = SplineSettings { eta: config.eta, ..spline };
        let context = ModelContext::from_dataset(data, spline, distance);
        Self::from_context(context, data.responses.clone(), &config.correlation_priors)
    }

    pub fn from_context(
        context: ModelContext,
        responses: Vec<Vec<Replicate>>,
        priors: &CorrelationPriorSpec,
    ) -> Result<Self> {
        let system = context.system()?;
        let design = design_matrix(&system);
        let penalty = PenaltyFactor::new(system.penalty())?;
        let corr = context.correlation();
        let (nd, nt) = (context.n_dose(), context.n_time());
        let mut phi_priors = CorrelationPriorParams::identity(nd, nt);
        if let Some(s) = priors.dose {
            phi_priors.dose = PhiPrior::from_sums(s.diag, s.off, s.interior, nd, nt);
        }
        if let (Some(s), true) = (priors.time, nt > 1) {
            phi_priors.time = Some(PhiPrior::from_sums(s.diag, s.off, s.interior, nt, nd));
        }
        let n_obs = responses.iter().flatten().map(|r| r.n_observed()).sum();
        Ok(Self { context, system, design, penalty, corr, phi_priors, responses, n_obs })
    }

    pub fn n_particles(&self) -> usize {
        self.responses.len()
    }

    pub fn n_coeffs(&self) -> usize {
        self.design.ncols()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.context.covariates
    }

    pub fn is_2d(&self) -> bool {
        self.context.time.is_some()
    }

    /// Fitted profile `B beta` over all grid cells.
    pub fn fitted(&self, beta: &[f64]) -> Vec<f64> {
        (&self.design * DVector::from_column_slice(beta)).as_slice().to_vec()
    }

    /// Replace the responses (same shape), as when simulating new data
    /// from the current state.
    pub fn set_responses(&mut self, responses: Vec<Vec<Replicate>>) {
        self.n_obs = responses.iter().flatten().map(|r| r.n_observed()).sum();
        self.responses = responses;
    }
}
