//! Noise model, integrated leaf likelihood and variance/correlation
//! full conditionals.

pub mod conditionals;
pub mod correlation;
pub mod marginal;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use conditionals::{draw_inv_gamma, draw_phi, draw_sigma2, draw_tau2, residual_log_lik, residual_quad_sum, PhiDraw, PHI_GRID_POINTS};
pub use correlation::{ar1_matrix, replicate_correlation, Axis, CorrelationStructure, DistanceMode, Whitener};
pub use marginal::{
    beta_conditional_moments, draw_beta, draw_beta_from_stats, log_marginal_from_stats, node_log_marginal,
    CopyKernel, CopyView, LeafStats, PenaltyFactor,
};

/// Replicate noise: `sigma2` times the separable AR(1) correlation.
/// `phi_t` is ignored for dose-only data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma2: f64,
    pub phi_d: f64,
    pub phi_t: f64,
}

/// Inverse-gamma hyperparameters (shape, scale) of `sigma2` and `tau2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariancePriorParams {
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub a_tau: f64,
    pub b_tau: f64,
}

impl Default for VariancePriorParams {
    fn default() -> Self {
        Self { a_sigma: 1.0, b_sigma: 1.0, a_tau: 1.0, b_tau: 1.0 }
    }
}

impl VariancePriorParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("a", self.a_sigma), ("b", self.b_sigma), ("a_tau", self.a_tau), ("b_tau", self.b_tau)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Prior on one AR(1) coefficient, induced by an inverse-Wishart-type
/// density on the axis correlation matrix with scale `Lambda`:
///
/// ```text
/// log p(phi) = -e log(1 - phi^2) - (l1 - phi l2 + phi^2 l3) / (2 (1 - phi^2))
/// ```
///
/// with `l1 = tr(Lambda)`, `l2` the sum of the first off-diagonals (both
/// sides), `l3` the sum of the interior diagonal, and `e` half the number
/// of other-axis profiles times `(n - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiPrior {
    pub exponent: f64,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

impl PhiPrior {
    /// `n_other` is the length of the other axis (1 for dose-only data).
    pub fn from_scale(lambda: &DMatrix<f64>, n_other: usize) -> Result<Self> {
        let n = lambda.nrows();
        if n == 0 || lambda.ncols() != n {
            return Err(Error::Config("correlation prior scale must be a nonempty square matrix".into()));
        }
        if (lambda - lambda.transpose()).abs().max() > 1e-12 * lambda.abs().max().max(1.0) {
            return Err(Error::Config("correlation prior scale must be symmetric".into()));
        }
        if lambda.clone().cholesky().is_none() {
            return Err(Error::Config("correlation prior scale must be positive definite".into()));
        }
        let l1 = lambda.trace();
        let l2: f64 = (1..n).map(|i| lambda[(i, i - 1)] + lambda[(i - 1, i)]).sum();
        let l3: f64 = (1..n.saturating_sub(1)).map(|i| lambda[(i, i)]).sum();
        Ok(Self {
            exponent: n_other as f64 * (n as f64 - 1.0) / 2.0,
            l1,
            l2,
            l3,
        })
    }

    /// Prior from the three scale-matrix sums directly.
    pub fn from_sums(l1: f64, l2: f64, l3: f64, n: usize, n_other: usize) -> Self {
        Self { exponent: n_other as f64 * (n as f64 - 1.0) / 2.0, l1, l2, l3 }
    }

    pub fn identity(n: usize, n_other: usize) -> Self {
        Self::from_scale(&DMatrix::identity(n, n), n_other).expect("identity is valid")
    }

    /// Unnormalized log density on `[0, 1]`; `-inf` at `phi = 1`.
    pub fn log_density(&self, phi: f64) -> f64 {
        if !(0.0..1.0).contains(&phi) {
            return f64::NEG_INFINITY;
        }
        let v = 1.0 - phi * phi;
        -self.exponent * v.ln() - (self.l1 - phi * self.l2 + phi * phi * self.l3) / (2.0 * v)
    }
}

/// Priors of the dose and (for 2D data) time correlation coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationPriorParams {
    pub dose: PhiPrior,
    pub time: Option<PhiPrior>,
}

impl CorrelationPriorParams {
    /// Identity scales on an `n_d x n_t` grid (`n_t == 1` for dose-only).
    pub fn identity(n_d: usize, n_t: usize) -> Self {
        Self::from_scales(None, None, n_d, n_t).expect("identity is valid")
    }

    pub fn from_scales(
        lambda: Option<&DMatrix<f64>>,
        gamma: Option<&DMatrix<f64>>,
        n_d: usize,
        n_t: usize,
    ) -> Result<Self> {
        let n_t = n_t.max(1);
        let check = |m: &DMatrix<f64>, n: usize, name: &str| {
            if m.nrows() != n {
                Err(Error::Config(format!("{name} must be {n} x {n}, got {} x {}", m.nrows(), m.ncols())))
            } else {
                Ok(())
            }
        };
        let dose = match lambda {
            Some(l) => {
                check(l, n_d, "dose correlation prior scale")?;
                PhiPrior::from_scale(l, n_t)?
            }
            None => PhiPrior::identity(n_d, n_t),
        };
        let time = if n_t > 1 {
            Some(match gamma {
                Some(g) => {
                    check(g, n_t, "time correlation prior scale")?;
                    PhiPrior::from_scale(g, n_d)?
                }
                None => PhiPrior::identity(n_t, n_d),
            })
        } else {
            None
        };
        Ok(Self { dose, time })
    }

    pub fn log_density(&self, phi_d: f64, phi_t: f64) -> f64 {
        self.dose.log_density(phi_d) + self.time.map_or(0.0, |t| t.log_density(phi_t))
    }
}
