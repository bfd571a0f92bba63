//! Full-conditional draws of the noise variance, the coefficient prior
//! variance and the AR(1) correlation coefficients.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use nalgebra::{DMatrix, DVector};

use super::correlation::{chol_log_det, cholesky_with_jitter, CorrelationStructure};
use super::marginal::CopyView;
use super::{NoiseModel, PhiPrior};
use crate::error::{Error, Result};

/// Number of grid points for the correlation coefficient update.
pub const PHI_GRID_POINTS: usize = 201;

/// Inverse-gamma draw with the given shape and scale.
pub fn draw_inv_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0)
        .map_err(|e| Error::Numerical(format!("inverse-gamma shape {shape}: {e}")))?;
    let v = scale / g.sample(rng);
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Numerical(format!("inverse-gamma draw overflowed (shape {shape}, scale {scale})")))
    }
}

/// `sigma2 ~ IG(a + N/2, b + SSR/2)` where `SSR = sum r' R^-1 r`.
pub fn draw_sigma2<R: Rng + ?Sized>(a: f64, b: f64, ssr: f64, n_obs: usize, rng: &mut R) -> Result<f64> {
    draw_inv_gamma(a + n_obs as f64 / 2.0, b + ssr / 2.0, rng)
}

/// `tau2 ~ IG(a_tau + n_coef/2, b_tau + sum beta' K beta / 2)` where
/// `n_coef` counts coefficients over all leaves.
pub fn draw_tau2<R: Rng + ?Sized>(a_tau: f64, b_tau: f64, penalty_ss: f64, n_coef: usize, rng: &mut R) -> Result<f64> {
    draw_inv_gamma(a_tau + n_coef as f64 / 2.0, b_tau + penalty_ss / 2.0, rng)
}

/// `(sum r' R^-1 r, sum log det R, observation count)` over residual
/// copies. Complete copies are whitened in O(n); copies with missing cells
/// use a dense factor of their observed correlation block.
pub fn residual_quad_sum(
    residuals: &[CopyView<'_>],
    corr: &CorrelationStructure,
    phi_d: f64,
    phi_t: f64,
) -> Result<(f64, f64, usize)> {
    let whitener = corr.whitener(phi_d, phi_t)?;
    let mut dense = None;
    let (mut quad, mut log_det, mut n) = (0.0, 0.0, 0usize);
    for r in residuals {
        if r.is_complete() {
            quad += whitener.quad(r.values);
            log_det += whitener.log_det();
            n += r.values.len();
            continue;
        }
        let idx = r.observed_indices();
        if idx.is_empty() {
            continue;
        }
        if dense.is_none() {
            dense = Some(corr.matrix(phi_d, phi_t)?);
        }
        let d: &DMatrix<f64> = dense.as_ref().expect("set above");
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |i, j| d[(idx[i], idx[j])]);
        let chol = cholesky_with_jitter(sub, "observed correlation block")?;
        let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| r.values[i]));
        let wy = chol.l().solve_lower_triangular(&y).expect("triangular");
        quad += wy.norm_squared();
        log_det += chol_log_det(&chol);
        n += idx.len();
    }
    Ok((quad, log_det, n))
}

/// Gaussian log likelihood of residual copies `r_c ~ N(0, sigma2 R)`.
pub fn residual_log_lik(residuals: &[CopyView<'_>], corr: &CorrelationStructure, model: &NoiseModel) -> Result<f64> {
    let (quad, log_det, n) = residual_quad_sum(residuals, corr, model.phi_d, model.phi_t)?;
    Ok(-0.5 * (n as f64 * (2.0 * std::f64::consts::PI * model.sigma2).ln() + log_det + quad / model.sigma2))
}

/// Outcome of a correlation coefficient update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiDraw {
    pub value: f64,
    pub accepted: bool,
}

/// One update of a correlation coefficient on `[0, 1)`.
///
/// The unnormalized conditional `prior(phi) * lik(phi)` is tabulated on
/// an evenly spaced grid of [`PHI_GRID_POINTS`] points. A proposal is drawn
/// from the piecewise-constant density that equals the tabulated value on
/// each grid cell `[g - h/2, g + h/2]` (clipped to `[0, 1]`), and accepted
/// with the independence Metropolis-Hastings ratio, so the update leaves
/// the exact conditional invariant.
pub fn draw_phi<R, F>(current: f64, prior: &PhiPrior, mut log_lik: F, rng: &mut R) -> Result<PhiDraw>
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> Result<f64>,
{
    let n = PHI_GRID_POINTS;
    let h = 1.0 / (n - 1) as f64;
    let mut log_t = Vec::with_capacity(n);
    for k in 0..n {
        let g = k as f64 * h;
        let lp = prior.log_density(g);
        log_t.push(if lp.is_finite() { lp + log_lik(g)? } else { lp });
    }
    let top = log_t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::Numerical("correlation conditional vanishes on the whole grid".into()));
    }
    let width = |k: usize| if k == 0 || k == n - 1 { h / 2.0 } else { h };
    let mass: Vec<f64> = (0..n).map(|k| (log_t[k] - top).exp() * width(k)).collect();
    let total: f64 = mass.iter().sum();
    let cell_of = |phi: f64| ((phi / h).round() as usize).min(n - 1);
    // proposal log density up to the shared constant
    let log_q = |phi: f64| log_t[cell_of(phi)];

    let mut u = rng.random::<f64>() * total;
    let mut k = 0;
    while k < n - 1 && u >= mass[k] {
        u -= mass[k];
        k += 1;
    }
    let lo = (k as f64 * h - h / 2.0).max(0.0);
    let hi = (k as f64 * h + h / 2.0).min(1.0);
    let proposal = lo + rng.random::<f64>() * (hi - lo);

    let target = |phi: f64, f: &mut F| -> Result<f64> {
        let lp = prior.log_density(phi);
        Ok(if lp.is_finite() { lp + f(phi)? } else { lp })
    };
    let lt_prop = target(proposal, &mut log_lik)?;
    if !lt_prop.is_finite() {
        return Ok(PhiDraw { value: current, accepted: false });
    }
    let lt_cur = target(current, &mut log_lik)?;
    let log_alpha = (lt_prop - log_q(proposal)) - (lt_cur - log_q(current));
    if !lt_cur.is_finite() || rng.random::<f64>().ln() < log_alpha {
        Ok(PhiDraw { value: proposal, accepted: true })
    } else {
        Ok(PhiDraw { value: current, accepted: false })
    }
}
