//! Leaf-level integrated likelihood and the Gaussian full conditional of
//! leaf spline coefficients.
//!
//! A leaf holds independent replicate profiles ("copies") `y_c = B_c beta +
//! e_c` with `e_c ~ N(0, sigma2 R_c)` and `beta ~ N(0, tau2 K^-1)`. Every
//! quantity below is assembled from the sufficient statistics
//!
//! ```text
//! W = sum_c B_c' R_c^-1 B_c,   b = sum_c B_c' R_c^-1 y_c,   q = sum_c y_c' R_c^-1 y_c
//! ```
//!
//! so the cost is cubic in the coefficient count, not the observation
//! count (Woodbury identity and matrix determinant lemma).

use std::f64::consts::PI;
use std::ops::AddAssign;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::correlation::{chol_log_det, cholesky_with_jitter, CorrelationStructure, Whitener};
use super::NoiseModel;
use crate::error::{Error, Result};

/// One replicate profile: all cells of a (dose x time) grid, dose-major,
/// with an optional observed-cell mask.
#[derive(Debug, Clone, Copy)]
pub struct CopyView<'a> {
    pub values: &'a [f64],
    pub mask: Option<&'a [bool]>,
}

impl<'a> CopyView<'a> {
    pub fn complete(values: &'a [f64]) -> Self {
        Self { values, mask: None }
    }

    pub fn is_complete(&self) -> bool {
        self.mask.is_none_or(|m| m.iter().all(|&o| o))
    }

    pub fn observed_indices(&self) -> Vec<usize> {
        match self.mask {
            None => (0..self.values.len()).collect(),
            Some(m) => (0..m.len()).filter(|&i| m[i]).collect(),
        }
    }

    pub fn n_observed(&self) -> usize {
        self.mask.map_or(self.values.len(), |m| m.iter().filter(|&&o| o).count())
    }
}

/// Sufficient statistics of a set of copies (see module docs).
#[derive(Debug, Clone, PartialEq)]
pub struct LeafStats {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
    pub q: f64,
    pub n_obs: usize,
    /// Sum of `log det R_c`.
    pub log_det_r: f64,
}

impl LeafStats {
    pub fn zeros(n_coeffs: usize) -> Self {
        Self {
            w: DMatrix::zeros(n_coeffs, n_coeffs),
            b: DVector::zeros(n_coeffs),
            q: 0.0,
            n_obs: 0,
            log_det_r: 0.0,
        }
    }
}

impl AddAssign<&LeafStats> for LeafStats {
    fn add_assign(&mut self, o: &LeafStats) {
        self.w += &o.w;
        self.b += &o.b;
        self.q += o.q;
        self.n_obs += o.n_obs;
        self.log_det_r += o.log_det_r;
    }
}

/// Prior precision factor `K` shared by all leaves.
#[derive(Debug, Clone)]
pub struct PenaltyFactor {
    penalty: DMatrix<f64>,
    log_det: f64,
}

impl PenaltyFactor {
    pub fn new(penalty: &DMatrix<f64>) -> Result<Self> {
        let c = Cholesky::new(penalty.clone()).ok_or_else(|| {
            Error::Numerical("penalty matrix is not positive definite; eta must be > 0".into())
        })?;
        Ok(Self {
            penalty: penalty.clone(),
            log_det: chol_log_det(&c),
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.penalty
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn n(&self) -> usize {
        self.penalty.nrows()
    }
}

/// Computes copy statistics for one `(phi_d, phi_t)`.
///
/// Complete copies go through the O(n) AR(1) whitening; copies with
/// missing cells use a dense Cholesky of the observed sub-correlation.
#[derive(Debug, Clone)]
pub struct CopyKernel<'a> {
    design: &'a DMatrix<f64>,
    corr: &'a CorrelationStructure,
    phi_d: f64,
    phi_t: f64,
    whitener: Whitener,
    whitened_design: DMatrix<f64>,
    gram: DMatrix<f64>,
    dense: Option<DMatrix<f64>>,
}

impl<'a> CopyKernel<'a> {
    pub fn new(
        design: &'a DMatrix<f64>,
        corr: &'a CorrelationStructure,
        phi_d: f64,
        phi_t: f64,
    ) -> Result<Self> {
        if design.nrows() != corr.n_cells() {
            return Err(Error::invalid(format!(
                "design has {} rows but the correlation grid has {} cells",
                design.nrows(),
                corr.n_cells()
            )));
        }
        let whitener = corr.whitener(phi_d, phi_t)?;
        let mut wd = design.clone();
        for mut col in wd.column_iter_mut() {
            whitener.whiten(col.as_mut_slice());
        }
        let gram = wd.tr_mul(&wd);
        Ok(Self {
            design,
            corr,
            phi_d,
            phi_t,
            whitener,
            whitened_design: wd,
            gram,
            dense: None,
        })
    }

    pub fn n_coeffs(&self) -> usize {
        self.design.ncols()
    }

    pub fn whitener(&self) -> &Whitener {
        &self.whitener
    }

    /// `B' R^-1 B` of a complete copy.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    fn dense(&mut self) -> Result<&DMatrix<f64>> {
        if self.dense.is_none() {
            self.dense = Some(self.corr.matrix(self.phi_d, self.phi_t)?);
        }
        Ok(self.dense.as_ref().expect("set above"))
    }

    /// Observed sub-correlation factor and design rows of an incomplete copy.
    fn masked_parts(&mut self, idx: &[usize]) -> Result<(Cholesky<f64, Dyn>, DMatrix<f64>)> {
        let dense = self.dense()?;
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |i, j| dense[(idx[i], idx[j])]);
        let chol = cholesky_with_jitter(sub, "observed correlation block")?;
        let rows = DMatrix::from_fn(idx.len(), self.design.ncols(), |i, j| self.design[(idx[i], j)]);
        Ok((chol, rows))
    }

    pub fn copy_stats(&mut self, copy: CopyView<'_>) -> Result<LeafStats> {
        if copy.values.len() != self.design.nrows() {
            return Err(Error::invalid("copy length does not match the design"));
        }
        if copy.is_complete() {
            let mut z = copy.values.to_vec();
            self.whitener.whiten(&mut z);
            let zv = DVector::from_vec(z);
            return Ok(LeafStats {
                w: self.gram.clone(),
                b: self.whitened_design.tr_mul(&zv),
                q: zv.norm_squared(),
                n_obs: copy.values.len(),
                log_det_r: self.whitener.log_det(),
            });
        }
        let idx = copy.observed_indices();
        if idx.is_empty() {
            return Ok(LeafStats::zeros(self.n_coeffs()));
        }
        let (chol, rows) = self.masked_parts(&idx)?;
        let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| copy.values[i]));
        let l = chol.l();
        let wb = l.solve_lower_triangular(&rows).expect("triangular");
        let wy = l.solve_lower_triangular(&y).expect("triangular");
        Ok(LeafStats {
            w: wb.tr_mul(&wb),
            b: wb.tr_mul(&wy),
            q: wy.norm_squared(),
            n_obs: idx.len(),
            log_det_r: chol_log_det(&chol),
        })
    }

    /// Summed statistics of several copies. Complete copies share the
    /// Gram matrix, so their whitened values are pooled before projecting.
    pub fn stats(&mut self, copies: &[CopyView<'_>]) -> Result<LeafStats> {
        let n = self.design.nrows();
        let mut s = LeafStats::zeros(self.n_coeffs());
        let mut pooled = DVector::zeros(n);
        let mut n_complete = 0usize;
        for c in copies {
            if c.values.len() != n {
                return Err(Error::invalid("copy length does not match the design"));
            }
            if c.is_complete() {
                let mut z = c.values.to_vec();
                self.whitener.whiten(&mut z);
                s.q += z.iter().map(|v| v * v).sum::<f64>();
                for (p, v) in pooled.iter_mut().zip(&z) {
                    *p += v;
                }
                n_complete += 1;
            } else {
                s += &self.copy_stats(*c)?;
            }
        }
        if n_complete > 0 {
            s.w += &self.gram * n_complete as f64;
            s.b += self.whitened_design.tr_mul(&pooled);
            s.n_obs += n_complete * n;
            s.log_det_r += n_complete as f64 * self.whitener.log_det();
        }
        Ok(s)
    }

    /// `(r' R^-1 r, log det R, n_obs)` of a residual copy.
    pub fn residual_quad(&mut self, r: CopyView<'_>) -> Result<(f64, f64, usize)> {
        if r.is_complete() {
            return Ok((self.whitener.quad(r.values), self.whitener.log_det(), r.values.len()));
        }
        let idx = r.observed_indices();
        if idx.is_empty() {
            return Ok((0.0, 0.0, 0));
        }
        let (chol, _) = self.masked_parts(&idx)?;
        let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| r.values[i]));
        let wy = chol.l().solve_lower_triangular(&y).expect("triangular");
        Ok((wy.norm_squared(), chol_log_det(&chol), idx.len()))
    }
}

/// `P = K / tau2 + W / sigma2` and its Cholesky factor.
fn posterior_precision(
    stats: &LeafStats,
    penalty: &PenaltyFactor,
    sigma2: f64,
    tau2: f64,
) -> Result<Cholesky<f64, Dyn>> {
    let p = penalty.matrix() / tau2 + &stats.w / sigma2;
    cholesky_with_jitter(p, "coefficient posterior precision")
}

/// Log integrated likelihood of a leaf from its sufficient statistics.
pub fn log_marginal_from_stats(
    stats: &LeafStats,
    penalty: &PenaltyFactor,
    sigma2: f64,
    tau2: f64,
) -> Result<f64> {
    check_scales(sigma2, tau2)?;
    let m = penalty.n() as f64;
    let n = stats.n_obs as f64;
    let chol = posterior_precision(stats, penalty, sigma2, tau2)?;
    let bt = &stats.b / sigma2;
    let fit = bt.dot(&chol.solve(&bt));
    let value = -0.5 * n * (2.0 * PI).ln() - 0.5 * (n * sigma2.ln() + stats.log_det_r)
        + 0.5 * (penalty.log_det() - m * tau2.ln())
        - 0.5 * chol_log_det(&chol)
        - 0.5 * (stats.q / sigma2 - fit);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numerical("non-finite leaf marginal likelihood".into()))
    }
}

fn check_scales(sigma2: f64, tau2: f64) -> Result<()> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) || !(tau2 > 0.0 && tau2.is_finite()) {
        return Err(Error::Numerical(format!(
            "variance components must be positive and finite (sigma2={sigma2}, tau2={tau2})"
        )));
    }
    Ok(())
}

/// Log density of the copies in a leaf with the coefficients integrated
/// out: `N(0, tau2 B K^-1 B' + sigma2 blockdiag(R_c))` over the stacked
/// observed values.
///
/// Small leaves (no more observations than coefficients) are evaluated
/// with a direct Cholesky of the stacked covariance; larger ones through
/// the sufficient statistics.
pub fn node_log_marginal(
    copies: &[CopyView<'_>],
    design: &DMatrix<f64>,
    penalty: &DMatrix<f64>,
    corr: &CorrelationStructure,
    model: &NoiseModel,
    tau2: f64,
) -> Result<f64> {
    check_scales(model.sigma2, tau2)?;
    let factor = PenaltyFactor::new(penalty)?;
    let n_obs: usize = copies.iter().map(|c| c.n_observed()).sum();
    if n_obs <= penalty.nrows() {
        return direct_log_marginal(copies, design, &factor, corr, model, tau2);
    }
    let mut kernel = CopyKernel::new(design, corr, model.phi_d, model.phi_t)?;
    let stats = kernel.stats(copies)?;
    log_marginal_from_stats(&stats, &factor, model.sigma2, tau2)
}

fn direct_log_marginal(
    copies: &[CopyView<'_>],
    design: &DMatrix<f64>,
    penalty: &PenaltyFactor,
    corr: &CorrelationStructure,
    model: &NoiseModel,
    tau2: f64,
) -> Result<f64> {
    let r = corr.matrix(model.phi_d, model.phi_t)?;
    let k_inv = penalty
        .matrix()
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("penalty matrix is singular".into()))?;
    let mut rows: Vec<(usize, usize)> = Vec::new();
    let mut y = Vec::new();
    for (c, copy) in copies.iter().enumerate() {
        for i in copy.observed_indices() {
            rows.push((c, i));
            y.push(copy.values[i]);
        }
    }
    let n = rows.len();
    if n == 0 {
        return Ok(0.0);
    }
    let b = DMatrix::from_fn(n, design.ncols(), |i, j| design[(rows[i].1, j)]);
    let mut cov = (&b * &k_inv * b.transpose()) * tau2;
    for i in 0..n {
        for j in 0..n {
            if rows[i].0 == rows[j].0 {
                cov[(i, j)] += model.sigma2 * r[(rows[i].1, rows[j].1)];
            }
        }
    }
    let chol = cholesky_with_jitter(cov, "leaf marginal covariance")?;
    let yv = DVector::from_vec(y);
    let quad = yv.dot(&chol.solve(&yv));
    Ok(-0.5 * (n as f64 * (2.0 * PI).ln() + chol_log_det(&chol) + quad))
}

/// Mean and covariance of `beta | y, sigma2, tau2` for a leaf.
pub fn beta_conditional_moments(
    stats: &LeafStats,
    penalty: &PenaltyFactor,
    sigma2: f64,
    tau2: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_scales(sigma2, tau2)?;
    let chol = posterior_precision(stats, penalty, sigma2, tau2)?;
    let mean = chol.solve(&(&stats.b / sigma2));
    Ok((mean, chol.inverse()))
}

/// Draw leaf coefficients from their Gaussian full conditional.
pub fn draw_beta_from_stats<R: Rng + ?Sized>(
    stats: &LeafStats,
    penalty: &PenaltyFactor,
    sigma2: f64,
    tau2: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    check_scales(sigma2, tau2)?;
    let chol = posterior_precision(stats, penalty, sigma2, tau2)?;
    let mean = chol.solve(&(&stats.b / sigma2));
    let z = DVector::from_fn(mean.len(), |_, _| StandardNormal.sample(rng));
    // P = L L'  =>  L'^-1 z ~ N(0, P^-1)
    let dev = chol
        .l_dirty()
        .tr_solve_lower_triangular(&z)
        .ok_or_else(|| Error::Numerical("singular coefficient precision".into()))?;
    Ok(mean + dev)
}

/// Draw leaf coefficients given the leaf's copies.
pub fn draw_beta<R: Rng + ?Sized>(
    copies: &[CopyView<'_>],
    design: &DMatrix<f64>,
    penalty: &DMatrix<f64>,
    corr: &CorrelationStructure,
    model: &NoiseModel,
    tau2: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let factor = PenaltyFactor::new(penalty)?;
    let stats = CopyKernel::new(design, corr, model.phi_d, model.phi_t)?.stats(copies)?;
    draw_beta_from_stats(&stats, &factor, model.sigma2, tau2, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{design_matrix, penalty_1d, Grid1D, SplineSettings, SplineSystem};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (DMatrix<f64>, DMatrix<f64>, CorrelationStructure) {
        let sys = SplineSystem::new(
            &SplineSettings { eta: 0.1, ..Default::default() },
            Grid1D::index(5).unwrap(),
            None,
        )
        .unwrap();
        (design_matrix(&sys), sys.penalty().clone(), CorrelationStructure::index(5, 1))
    }

    #[test]
    fn vanishing_tau2_gives_pure_noise_density() {
        let (b, k, cs) = setup();
        let y1 = [0.3, -0.1, 0.2, 0.5, -0.4];
        let y2 = [0.1, 0.0, -0.2, 0.3, 0.2];
        let copies = [CopyView::complete(&y1), CopyView::complete(&y2)];
        let model = NoiseModel { sigma2: 0.2, phi_d: 0.4, phi_t: 0.0 };
        let lm = node_log_marginal(&copies, &b, &k, &cs, &model, 1e-12).unwrap();
        let w = cs.whitener(0.4, 0.0).unwrap();
        let expect: f64 = [&y1[..], &y2[..]]
            .iter()
            .map(|y| -0.5 * (5.0 * (2.0 * PI * 0.2).ln() + w.log_det() + w.quad(y) / 0.2))
            .sum();
        assert!((lm - expect).abs() < 1e-6, "{lm} vs {expect}");
    }

    /// Stats-based evaluation against a dense multivariate normal density
    /// of the stacked observations, on a 2D grid with many copies.
    #[test]
    fn sufficient_statistics_match_dense_gaussian() {
        let sys = SplineSystem::new(
            &SplineSettings { eta: 0.05, ..Default::default() },
            Grid1D::index(4).unwrap(),
            Some(Grid1D::index(3).unwrap()),
        )
        .unwrap();
        let b = design_matrix(&sys);
        let cs = CorrelationStructure::index(4, 3);
        let m = sys.n_coeffs();
        let ys: Vec<Vec<f64>> = (0..m / 4 + 3)
            .map(|c| (0..12).map(|j| ((c * 12 + j) as f64 * 0.37).cos()).collect())
            .collect();
        let copies: Vec<_> = ys.iter().map(|y| CopyView::complete(y)).collect();
        let model = NoiseModel { sigma2: 0.25, phi_d: 0.35, phi_t: 0.6 };
        assert!(copies.len() * 12 > m);
        let fast = node_log_marginal(&copies, &b, sys.penalty(), &cs, &model, 1.7).unwrap();
        let dense = direct_log_marginal(&copies, &b, &PenaltyFactor::new(sys.penalty()).unwrap(), &cs, &model, 1.7).unwrap();
        assert!((fast - dense).abs() < 1e-8 * dense.abs().max(1.0), "{fast} vs {dense}");
    }

    #[test]
    fn copy_order_does_not_matter() {
        let (b, k, cs) = setup();
        let ys: Vec<Vec<f64>> = (0..4).map(|i| (0..5).map(|j| ((i * 5 + j) as f64).sin()).collect()).collect();
        let model = NoiseModel { sigma2: 0.3, phi_d: 0.2, phi_t: 0.0 };
        let fwd: Vec<_> = ys.iter().map(|y| CopyView::complete(y)).collect();
        let rev: Vec<_> = ys.iter().rev().map(|y| CopyView::complete(y)).collect();
        let a = node_log_marginal(&fwd, &b, &k, &cs, &model, 0.7).unwrap();
        let c = node_log_marginal(&rev, &b, &k, &cs, &model, 0.7).unwrap();
        assert!((a - c).abs() < 1e-10);
    }

    #[test]
    fn beta_mean_limits() {
        // square invertible design: order-2 basis with knots at every point
        let sys = SplineSystem::new(
            &SplineSettings {
                dose: crate::basis::AxisSettings { order: 2, knots: crate::basis::KnotPlacement::EveryGridPoint },
                eta: 0.1,
                ..Default::default()
            },
            Grid1D::index(4).unwrap(),
            None,
        )
        .unwrap();
        let b = design_matrix(&sys);
        assert_eq!(b.shape(), (4, 4));
        let cs = CorrelationStructure::index(4, 1);
        let factor = PenaltyFactor::new(sys.penalty()).unwrap();
        let y1 = [1.0, 2.0, 0.5, -1.0];
        let y2 = [1.2, 1.8, 0.7, -0.8];
        let mut kern = CopyKernel::new(&b, &cs, 0.3, 0.0).unwrap();
        let stats = kern.stats(&[CopyView::complete(&y1), CopyView::complete(&y2)]).unwrap();

        let (mean, _) = beta_conditional_moments(&stats, &factor, 1e-10, 1.0).unwrap();
        let ybar = DVector::from_fn(4, |i, _| (y1[i] + y2[i]) / 2.0);
        let target = b.clone().try_inverse().unwrap() * ybar;
        assert!((mean - target).abs().max() < 1e-6);

        let (mean, _) = beta_conditional_moments(&stats, &factor, 1.0, 1e-12).unwrap();
        assert!(mean.abs().max() < 1e-9);
    }

    #[test]
    fn beta_draws_match_conditional_moments() {
        let (b, k, cs) = setup();
        let factor = PenaltyFactor::new(&k).unwrap();
        let y = [0.3, 0.6, 0.2, -0.1, 0.4];
        let mut kern = CopyKernel::new(&b, &cs, 0.5, 0.0).unwrap();
        let stats = kern.stats(&[CopyView::complete(&y)]).unwrap();
        let (mean, cov) = beta_conditional_moments(&stats, &factor, 0.2, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let m = mean.len();
        let mut sum = DVector::zeros(m);
        let mut sq = DMatrix::zeros(m, m);
        for _ in 0..n {
            let d = draw_beta_from_stats(&stats, &factor, 0.2, 0.5, &mut rng).unwrap();
            sum += &d;
            sq += &d * d.transpose();
        }
        let emp_mean = &sum / n as f64;
        let emp_cov = &sq / n as f64 - &emp_mean * emp_mean.transpose();
        for i in 0..m {
            let se = (cov[(i, i)] / n as f64).sqrt();
            assert!((emp_mean[i] - mean[i]).abs() < 4.0 * se, "coef {i}");
            for j in 0..m {
                // var of a sample covariance entry is (s_ii s_jj + s_ij^2) / n
                let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)].powi(2)) / n as f64).sqrt();
                assert!((emp_cov[(i, j)] - cov[(i, j)]).abs() < 5.0 * se);
            }
        }
    }

    #[test]
    fn masked_copy_uses_observed_cells_only() {
        let (b, k, cs) = setup();
        let y = [0.3, 99.0, 0.2, -0.1, 0.4];
        let mask = [true, false, true, true, true];
        let model = NoiseModel { sigma2: 0.2, phi_d: 0.5, phi_t: 0.0 };
        let masked = [CopyView { values: &y, mask: Some(&mask) }, CopyView::complete(&[0.1, 0.2, 0.3, 0.2, 0.1])];
        let via_stats = {
            let mut kern = CopyKernel::new(&b, &cs, 0.5, 0.0).unwrap();
            let s = kern.stats(&masked).unwrap();
            log_marginal_from_stats(&s, &PenaltyFactor::new(&k).unwrap(), 0.2, 0.9).unwrap()
        };
        let direct = direct_log_marginal(&masked, &b, &PenaltyFactor::new(&k).unwrap(), &cs, &model, 0.9).unwrap();
        assert!((via_stats - direct).abs() < 1e-9);
        assert!(penalty_1d(3, 0.0).is_ok());
    }
}
