//! Markov chain Monte Carlo over trees, leaf coefficients and variance
//! components.
//!
//! One sweep is: a Metropolis-Hastings tree move with the leaf
//! coefficients integrated out, then Gibbs draws of every leaf's
//! coefficients, `sigma2`, `tau2`, `phi_d` and (for surfaces) `phi_t`.

mod diagnostics;
mod model;
mod run;
mod step;

use crate::error::{Error, Result};
use crate::likelihood::{NoiseModel, VariancePriorParams};
use crate::tree::{MoveKind, MoveProbs, Tree, TreePriorParams};

pub use diagnostics::{effective_sample_size, split_rhat, ChainDiagnostics};
pub use model::{Model, ModelContext};
pub use run::{chain_rng, run_chain, run_chains, run_chain_from, Posterior};
pub use step::{
    gibbs_sweep, initialize_state, log_posterior, mh_tree_step, mh_tree_step_with, SweepCache, TreeStepOutcome,
};

/// Sums of the scale matrix of one correlation prior: diagonal,
/// first off-diagonals (both sides) and interior diagonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleSums {
    pub diag: f64,
    pub off: f64,
    pub interior: f64,
}

/// Correlation prior scales; `None` means the identity matrix of the
/// matching grid size.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CorrelationPriorSpec {
    pub dose: Option<ScaleSums>,
    pub time: Option<ScaleSums>,
}

/// Which components a sweep updates. Components switched off keep their
/// current values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateFlags {
    pub tree: bool,
    pub beta: bool,
    pub sigma2: bool,
    pub tau2: bool,
    pub phi_d: bool,
    pub phi_t: bool,
}

impl Default for UpdateFlags {
    fn default() -> Self {
        Self { tree: true, beta: true, sigma2: true, tau2: true, phi_d: true, phi_t: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub move_probs: MoveProbs,
    pub tree_prior: TreePriorParams,
    pub variance_priors: VariancePriorParams,
    pub correlation_priors: CorrelationPriorSpec,
    pub eta: f64,
    pub seed: u64,
    pub n_chains: usize,
    pub tree_steps_per_sweep: usize,
    pub updates: UpdateFlags,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 160_000,
            burn_in: 80_000,
            thin: 10,
            move_probs: MoveProbs::default(),
            tree_prior: TreePriorParams::default(),
            variance_priors: VariancePriorParams::default(),
            correlation_priors: CorrelationPriorSpec::default(),
            eta: crate::basis::DEFAULT_ETA,
            seed: 1,
            n_chains: 4,
            tree_steps_per_sweep: 1,
            updates: UpdateFlags::default(),
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.n_chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        self.move_probs.validate()?;
        self.tree_prior.validate()?;
        self.variance_priors.validate()
    }

    /// Number of draws a chain stores.
    pub fn n_stored(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    /// Whether iteration `iter` (1-based) is stored.
    pub fn is_stored(&self, iter: usize) -> bool {
        iter > self.burn_in && (iter - self.burn_in) % self.thin == 0
    }
}

/// Current values of every sampled quantity. Leaf coefficients live in
/// the tree's leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub tree: Tree,
    pub noise: NoiseModel,
    pub tau2: f64,
    pub log_post: f64,
}

/// A stored draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub iteration: usize,
    pub state: ChainState,
}

/// Proposed / accepted counts per move type after burn-in. Proposals that
/// were impossible count as proposed-and-rejected; numerical failures are
/// rejections counted again in `failed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AcceptanceTable {
    pub proposed: [u64; 4],
    pub accepted: [u64; 4],
    pub failed: [u64; 4],
}

impl AcceptanceTable {
    pub fn record(&mut self, kind: MoveKind, accepted: bool, failed: bool) {
        let k = kind.index();
        self.proposed[k] += 1;
        self.accepted[k] += accepted as u64;
        self.failed[k] += failed as u64;
    }

    pub fn rate(&self, kind: MoveKind) -> f64 {
        let k = kind.index();
        if self.proposed[k] == 0 {
            f64::NAN
        } else {
            self.accepted[k] as f64 / self.proposed[k] as f64
        }
    }

    pub fn total_proposed(&self) -> u64 {
        self.proposed.iter().sum()
    }

    pub fn merge(&mut self, o: &AcceptanceTable) {
        for k in 0..4 {
            self.proposed[k] += o.proposed[k];
            self.accepted[k] += o.accepted[k];
            self.failed[k] += o.failed[k];
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorChain {
    pub chain_index: usize,
    pub seed: u64,
    pub config: McmcConfig,
    pub draws: Vec<Draw>,
    pub acceptance: AcceptanceTable,
}

impl PosteriorChain {
    pub fn trace(&self, f: impl Fn(&ChainState) -> f64) -> Vec<f64> {
        self.draws.iter().map(|d| f(&d.state)).collect()
    }
}
