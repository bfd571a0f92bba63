//! Posterior predictive profiles and their calibration against data.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::datastore::ExposureDataset;
use crate::error::{Error, Result};
use crate::sampler::{Draw, Posterior};

/// Pointwise predictive summary over the (dose x time) grid, dose-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSummary {
    pub doses: Vec<f64>,
    pub times: Option<Vec<f64>>,
    pub level: f64,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Per-draw predictive profiles, when requested.
    pub samples: Option<Vec<Vec<f64>>>,
}

/// Sample quantile, linear interpolation between order statistics
/// (type 7). `sorted` must be ascending.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("interval level must be in (0, 1), got {level}")));
    }
    Ok(())
}

/// Leaf mean profile of a draw at covariates `x`.
pub(crate) fn draw_mean(draw: &Draw, design: &nalgebra::DMatrix<f64>, x: &[f64]) -> Result<DVector<f64>> {
    let c = draw
        .state
        .tree
        .leaf_for(x)
        .coeffs
        .as_ref()
        .ok_or_else(|| Error::invalid("posterior draw has a leaf without coefficients"))?;
    Ok(design * DVector::from_column_slice(c))
}

/// Posterior predictive distribution of a new replicate profile at
/// covariates `x_star`: for every draw, the leaf mean plus Gaussian noise
/// with covariance `sigma2 R`. Draw `k` uses random stream `k` of `seed`,
/// so results do not depend on thread count.
pub fn posterior_predictive(
    post: &Posterior,
    x_star: &[f64],
    level: f64,
    seed: u64,
    keep_samples: bool,
) -> Result<PredictiveSummary> {
    check_level(level)?;
    if x_star.len() != post.context.n_covariates() {
        return Err(Error::invalid(format!(
            "covariate vector has {} entries, the model has {}",
            x_star.len(),
            post.context.n_covariates()
        )));
    }
    let draws: Vec<&Draw> = post.draws().collect();
    if draws.is_empty() {
        return Err(Error::invalid("posterior has no draws"));
    }
    let system = post.context.system()?;
    let design = crate::basis::design_matrix(&system);
    let corr = post.context.correlation();
    let n = post.context.n_cells();
    let samples: Vec<Vec<f64>> = draws
        .par_iter()
        .enumerate()
        .map(|(k, d)| -> Result<Vec<f64>> {
            let mean = draw_mean(d, &design, x_star)?;
            let noise = d.state.noise;
            let r = corr.matrix(noise.phi_d, if system.is_2d() { noise.phi_t } else { 0.0 })?;
            let l = r
                .cholesky()
                .ok_or_else(|| Error::Numerical("predictive correlation is singular".into()))?
                .l();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            Ok((mean + l * z * noise.sigma2.sqrt()).as_slice().to_vec())
        })
        .collect::<Result<_>>()?;
    let m = samples.len() as f64;
    let alpha = (1.0 - level) / 2.0;
    let mut mean = vec![0.0; n];
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut col = vec![0.0; samples.len()];
    for c in 0..n {
        for (v, s) in col.iter_mut().zip(&samples) {
            *v = s[c];
        }
        mean[c] = col.iter().sum::<f64>() / m;
        col.sort_by(|a, b| a.total_cmp(b));
        lower[c] = quantile_sorted(&col, alpha);
        upper[c] = quantile_sorted(&col, 1.0 - alpha);
    }
    Ok(PredictiveSummary {
        doses: post.context.dose.values().to_vec(),
        times: post.context.time.as_ref().map(|t| t.values().to_vec()),
        level,
        mean,
        lower,
        upper,
        samples: keep_samples.then_some(samples),
    })
}

/// Coverage of one particle's observed replicates by a predictive summary.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub particle: String,
    pub n_points: usize,
    pub covered: usize,
    pub coverage: f64,
    /// Root mean squared error of the predictive mean against observations.
    pub rmse: f64,
}

pub fn score_coverage(particle: &str, summary: &PredictiveSummary, replicates: &[crate::datastore::Replicate]) -> CoverageRow {
    let (mut n, mut hit, mut se) = (0usize, 0usize, 0.0);
    for r in replicates {
        for c in 0..r.values.len() {
            if r.is_observed(c) {
                let y = r.values[c];
                n += 1;
                hit += (y >= summary.lower[c] && y <= summary.upper[c]) as usize;
                se += (y - summary.mean[c]).powi(2);
            }
        }
    }
    CoverageRow {
        particle: particle.to_string(),
        n_points: n,
        covered: hit,
        coverage: hit as f64 / n.max(1) as f64,
        rmse: (se / n.max(1) as f64).sqrt(),
    }
}

/// Predictive summaries and coverage of every particle of `data`, which
/// must share the fitted grids.
pub fn predictive_check(
    post: &Posterior,
    data: &ExposureDataset,
    level: f64,
    seed: u64,
) -> Result<Vec<(PredictiveSummary, CoverageRow)>> {
    if data.dose != post.context.dose || data.time != post.context.time {
        return Err(Error::invalid("data grids do not match the fitted model's grids"));
    }
    (0..data.n_particles())
        .map(|i| {
            let s = posterior_predictive(post, &data.covariates[i], level, seed.wrapping_add(i as u64), false)?;
            let row = score_coverage(&data.particles[i], &s, &data.responses[i]);
            Ok((s, row))
        })
        .collect()
}

/// Overall fraction of observed points inside their intervals.
pub fn pooled_coverage(rows: &[CoverageRow]) -> f64 {
    let n: usize = rows.iter().map(|r| r.n_points).sum();
    let h: usize = rows.iter().map(|r| r.covered).sum();
    h as f64 / n.max(1) as f64
}
