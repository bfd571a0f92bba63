//! AR(1) correlation along dose and time, and their separable product.
//!
//! Correlation between grid points `u` and `v` on one axis is
//! `phi^|pos_u - pos_v|`. Positions are grid indices by default, or raw
//! grid values. Along an axis the AR(1) process is Markov, so its inverse
//! factors as `L' L` with `L` lower bidiagonal; whitening a residual
//! profile costs O(n) and the log determinant is a sum over adjacent
//! pairs. The separable dose x time correlation is the Kronecker product
//! `R_dose (x) R_time` in dose-major order.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::basis::Grid1D;
use crate::error::{Error, Result};

/// How `|d - d'|` is measured in the correlation exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMode {
    Index,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Dose,
    Time,
}

/// Correlation matrix `phi^|u - v|` over grid indices.
pub fn ar1_matrix(n: usize, phi: f64) -> Result<DMatrix<f64>> {
    let pos: Vec<f64> = (0..n).map(|i| i as f64).collect();
    ar1_matrix_at(&pos, phi)
}

/// Correlation matrix `phi^|p_u - p_v|` at arbitrary positions.
pub fn ar1_matrix_at(positions: &[f64], phi: f64) -> Result<DMatrix<f64>> {
    check_phi(phi)?;
    if positions.is_empty() {
        return Err(Error::invalid("correlation matrix needs at least one point"));
    }
    let n = positions.len();
    Ok(DMatrix::from_fn(n, n, |u, v| {
        if u == v {
            1.0
        } else {
            phi.powf((positions[u] - positions[v]).abs())
        }
    }))
}

pub(crate) fn check_phi(phi: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(Error::invalid(format!("correlation {phi} is outside [0, 1]")));
    }
    Ok(())
}

/// Per-replicate correlation over an `n_d x n_t` grid (index distances),
/// dose-major. With `n_t == 1` this is the dose AR(1) matrix.
pub fn replicate_correlation(n_d: usize, n_t: usize, phi_d: f64, phi_t: f64) -> Result<DMatrix<f64>> {
    if n_d == 0 || n_t == 0 {
        return Err(Error::invalid("grid dimensions must be positive"));
    }
    Ok(ar1_matrix(n_d, phi_d)?.kronecker(&ar1_matrix(n_t, phi_t)?))
}

/// Bidiagonal whitening factor of one AR(1) axis.
#[derive(Debug, Clone)]
pub struct AxisWhitener {
    /// `rho[u] = phi^(pos_u - pos_{u-1})`, `rho[0] = 0`.
    rho: Vec<f64>,
    inv_sd: Vec<f64>,
    log_det: f64,
}

impl AxisWhitener {
    /// `None` when the correlation is singular (`phi == 1`).
    pub fn new(positions: &[f64], phi: f64) -> Option<Self> {
        let n = positions.len();
        let mut rho = vec![0.0; n];
        let mut inv_sd = vec![1.0; n];
        let mut log_det = 0.0;
        for u in 1..n {
            let r = phi.powf(positions[u] - positions[u - 1]);
            let v = 1.0 - r * r;
            if !(v > 0.0) {
                return None;
            }
            rho[u] = r;
            inv_sd[u] = 1.0 / v.sqrt();
            log_det += v.ln();
        }
        Some(Self { rho, inv_sd, log_det })
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Whiten `n` values spaced `stride` apart starting at `offset`.
    #[inline]
    fn apply(&self, z: &mut [f64], offset: usize, stride: usize) {
        for u in (1..self.rho.len()).rev() {
            let i = offset + u * stride;
            z[i] = (z[i] - self.rho[u] * z[i - stride]) * self.inv_sd[u];
        }
    }
}

/// Whitening factor of the separable dose x time correlation.
#[derive(Debug, Clone)]
pub struct Whitener {
    dose: AxisWhitener,
    time: AxisWhitener,
}

impl Whitener {
    pub fn n_cells(&self) -> usize {
        self.dose.rho.len() * self.time.rho.len()
    }

    /// `log det R` of one full profile.
    pub fn log_det(&self) -> f64 {
        let (nd, nt) = (self.dose.rho.len() as f64, self.time.rho.len() as f64);
        nt * self.dose.log_det + nd * self.time.log_det
    }

    /// In-place `z <- L z` with `L' L = R^-1`.
    pub fn whiten(&self, z: &mut [f64]) {
        let (nd, nt) = (self.dose.rho.len(), self.time.rho.len());
        debug_assert_eq!(z.len(), nd * nt);
        if nt > 1 {
            for a in 0..nd {
                self.time.apply(z, a * nt, 1);
            }
        }
        for b in 0..nt {
            self.dose.apply(z, b, nt);
        }
    }

    /// `r' R^-1 r` for a full profile.
    pub fn quad(&self, r: &[f64]) -> f64 {
        let mut z = r.to_vec();
        self.whiten(&mut z);
        z.iter().map(|v| v * v).sum()
    }
}

/// Axis positions of the dose (and time) grid used by every correlation
/// computation of a fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationStructure {
    dose_pos: Vec<f64>,
    time_pos: Vec<f64>,
}

impl CorrelationStructure {
    pub fn new(dose: &Grid1D, time: Option<&Grid1D>, mode: DistanceMode) -> Self {
        let pos = |g: &Grid1D| match mode {
            DistanceMode::Index => (0..g.len()).map(|i| i as f64).collect(),
            DistanceMode::Raw => g.values().to_vec(),
        };
        Self {
            dose_pos: pos(dose),
            time_pos: time.map_or_else(|| vec![0.0], pos),
        }
    }

    /// Index distances on an `n_d x n_t` grid.
    pub fn index(n_d: usize, n_t: usize) -> Self {
        Self {
            dose_pos: (0..n_d).map(|i| i as f64).collect(),
            time_pos: (0..n_t.max(1)).map(|i| i as f64).collect(),
        }
    }

    pub fn n_dose(&self) -> usize {
        self.dose_pos.len()
    }

    pub fn n_time(&self) -> usize {
        self.time_pos.len()
    }

    pub fn n_cells(&self) -> usize {
        self.n_dose() * self.n_time()
    }

    pub fn positions(&self, axis: Axis) -> &[f64] {
        match axis {
            Axis::Dose => &self.dose_pos,
            Axis::Time => &self.time_pos,
        }
    }

    /// Dense per-replicate correlation, dose-major.
    pub fn matrix(&self, phi_d: f64, phi_t: f64) -> Result<DMatrix<f64>> {
        Ok(ar1_matrix_at(&self.dose_pos, phi_d)?.kronecker(&ar1_matrix_at(&self.time_pos, phi_t)?))
    }

    pub fn whitener(&self, phi_d: f64, phi_t: f64) -> Result<Whitener> {
        check_phi(phi_d)?;
        check_phi(phi_t)?;
        let singular = || Error::Numerical("correlation matrix is singular (phi = 1)".into());
        Ok(Whitener {
            dose: AxisWhitener::new(&self.dose_pos, phi_d).ok_or_else(singular)?,
            time: AxisWhitener::new(&self.time_pos, phi_t).ok_or_else(singular)?,
        })
    }
}

/// Cholesky factor with up to one retry after adding a small diagonal
/// jitter (1e-10 relative to the mean diagonal).
pub(crate) fn cholesky_with_jitter(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let n = m.nrows();
    let scale = (m.trace() / n.max(1) as f64).abs().max(1e-300);
    match Cholesky::new(m.clone()) {
        Some(c) => Ok(c),
        None => {
            let mut j = m;
            for i in 0..n {
                j[(i, i)] += 1e-10 * scale;
            }
            Cholesky::new(j).ok_or_else(|| {
                Error::Numerical(format!("{what} is not positive definite (check eta / tau2 settings)"))
            })
        }
    }
}

/// `log det` from a Cholesky factor.
pub(crate) fn chol_log_det(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}
