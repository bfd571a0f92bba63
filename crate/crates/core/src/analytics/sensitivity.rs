//! First-order and total Sobol sensitivity indices.
//!
//! Inputs are uniform over the observed covariate box (log-uniform for
//! log-scale covariates). Two Latin hypercube base samples `A` and `B` of
//! size `n` are drawn; `AB_j` is `A` with column `j` taken from `B`. With
//! `V` the output variance,
//!
//! ```text
//! S_j = mean(f(B) (f(AB_j) - f(A))) / V            (first order)
//! T_j = mean((f(A) - f(AB_j))^2) / (2 V)           (total)
//! ```
//!
//! For a fitted model `f` is the noise-free leaf mean of one posterior
//! draw; indices are computed per draw and averaged over draws.

use nalgebra::DVector;
use rand::Rng;

use super::simulate::latin_hypercube;
use crate::error::{Error, Result};
use crate::sampler::Posterior;

pub const MIN_BASE_SAMPLES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensitivityMode {
    /// Indices at every (dose, time) cell, plus the grid-averaged ones.
    PerPoint,
    /// Only grid-averaged indices: numerators and variances pooled over
    /// cells, i.e. each cell weighted by its output variance.
    Averaged,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IndexEstimate {
    pub first: f64,
    pub first_se: f64,
    pub total: f64,
    pub total_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub names: Vec<String>,
    pub mode: SensitivityMode,
    pub n_base: usize,
    /// Grid-averaged indices per variable.
    pub averaged: Vec<IndexEstimate>,
    /// `[cell][variable]`, in per-point mode.
    pub per_point: Option<Vec<Vec<IndexEstimate>>>,
    /// Draws used, and how many of them had a constant response (skipped).
    pub n_draws: usize,
    pub n_constant: usize,
    /// Variables with `T_j < S_j - 2 SE`.
    pub violations: Vec<String>,
}

impl SensitivityReport {
    /// Variable indices ordered by decreasing total index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.averaged.len()).collect();
        idx.sort_by(|&a, &b| self.averaged[b].total.total_cmp(&self.averaged[a].total));
        idx
    }
}

/// Base samples mapped onto the covariate box.
pub struct SobolDesign {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

impl SobolDesign {
    pub fn new<R: Rng + ?Sized>(ranges: &[(f64, f64)], log_scale: &[bool], n_base: usize, rng: &mut R) -> Result<Self> {
        if n_base < MIN_BASE_SAMPLES {
            return Err(Error::invalid(format!("n_base must be at least {MIN_BASE_SAMPLES}, got {n_base}")));
        }
        let p = ranges.len();
        let map = |u: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            u.into_iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .map(|(j, &t)| {
                            let (lo, hi) = ranges[j];
                            if log_scale.get(j).copied().unwrap_or(false) && lo > 0.0 {
                                (lo.ln() + t * (hi.ln() - lo.ln())).exp()
                            } else {
                                lo + t * (hi - lo)
                            }
                        })
                        .collect()
                })
                .collect()
        };
        let a = map(latin_hypercube(n_base, p, rng));
        let b = map(latin_hypercube(n_base, p, rng));
        Ok(Self { a, b })
    }

    pub fn p(&self) -> usize {
        self.a[0].len()
    }

    /// All evaluation rows: `A`, `B`, then `AB_1 .. AB_p`.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        let n = self.a.len();
        let mut out = Vec::with_capacity(n * (self.p() + 2));
        out.extend(self.a.iter().cloned());
        out.extend(self.b.iter().cloned());
        for j in 0..self.p() {
            for i in 0..n {
                let mut r = self.a[i].clone();
                r[j] = self.b[i][j];
                out.push(r);
            }
        }
        out
    }
}

/// Per-output numerators and variance of one function.
struct RawIndices {
    /// `[output]`
    var: Vec<f64>,
    /// `[output][var]` numerators and their per-sample standard deviations.
    s_num: Vec<Vec<(f64, f64)>>,
    t_num: Vec<Vec<(f64, f64)>>,
}

fn mean_sd(x: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = x.clone().count() as f64;
    let m = x.clone().sum::<f64>() / n;
    let v = x.map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, v.sqrt())
}

/// `values[row][output]` in the order of [`SobolDesign::rows`].
fn raw_indices(values: &[Vec<f64>], n: usize, p: usize) -> RawIndices {
    let n_out = values[0].len();
    let (fa, fb) = (&values[..n], &values[n..2 * n]);
    let mut var = vec![0.0; n_out];
    let mut s_num = vec![vec![(0.0, 0.0); p]; n_out];
    let mut t_num = vec![vec![(0.0, 0.0); p]; n_out];
    for c in 0..n_out {
        let all = fa.iter().chain(fb).map(|r| r[c]);
        var[c] = mean_sd(all).1.powi(2);
        for j in 0..p {
            let fab = &values[(2 + j) * n..(3 + j) * n];
            s_num[c][j] = mean_sd((0..n).map(|i| fb[i][c] * (fab[i][c] - fa[i][c])));
            t_num[c][j] = mean_sd((0..n).map(|i| 0.5 * (fa[i][c] - fab[i][c]).powi(2)));
        }
    }
    RawIndices { var, s_num, t_num }
}

/// Indices from summed numerators and variances; `None` for a constant
/// response.
fn finish(var: f64, s: &[(f64, f64)], t: &[(f64, f64)], n: usize) -> Option<Vec<IndexEstimate>> {
    if !(var > 1e-300) {
        return None;
    }
    let rn = (n as f64).sqrt();
    Some(
        s.iter()
            .zip(t)
            .map(|(&(sm, ss), &(tm, ts))| IndexEstimate {
                first: sm / var,
                first_se: ss / rn / var,
                total: tm / var,
                total_se: ts / rn / var,
            })
            .collect(),
    )
}

/// Accumulates per-function estimates into their average.
struct Averager {
    averaged: Vec<IndexEstimate>,
    per_point: Option<Vec<Vec<IndexEstimate>>>,
    point_counts: Vec<usize>,
    count: usize,
    constant: usize,
}

impl Averager {
    fn new(p: usize, n_out: usize, mode: SensitivityMode) -> Self {
        Self {
            averaged: vec![IndexEstimate::default(); p],
            per_point: (mode == SensitivityMode::PerPoint).then(|| vec![vec![IndexEstimate::default(); p]; n_out]),
            point_counts: vec![0; n_out],
            count: 0,
            constant: 0,
        }
    }

    fn add(acc: &mut [IndexEstimate], e: &[IndexEstimate]) {
        for (a, e) in acc.iter_mut().zip(e) {
            a.first += e.first;
            a.first_se += e.first_se;
            a.total += e.total;
            a.total_se += e.total_se;
        }
    }

    /// `noise_var` is added to every cell's variance (zero for the mean
    /// surface).
    fn push(&mut self, raw: &RawIndices, n: usize, noise_var: f64) {
        let p = self.averaged.len();
        let total_var: f64 = raw.var.iter().map(|v| v + noise_var).sum();
        let pooled = |num: &Vec<Vec<(f64, f64)>>| -> Vec<(f64, f64)> {
            (0..p)
                .map(|j| {
                    let m = num.iter().map(|r| r[j].0).sum::<f64>();
                    // sd of a sum of correlated terms is at most the sum of sds
                    let s = num.iter().map(|r| r[j].1).sum::<f64>();
                    (m, s)
                })
                .collect()
        };
        match finish(total_var, &pooled(&raw.s_num), &pooled(&raw.t_num), n) {
            Some(e) => {
                Self::add(&mut self.averaged, &e);
                self.count += 1;
            }
            None => self.constant += 1,
        }
        if let Some(pp) = &mut self.per_point {
            for (c, acc) in pp.iter_mut().enumerate() {
                if let Some(e) = finish(raw.var[c] + noise_var, &raw.s_num[c], &raw.t_num[c], n) {
                    Self::add(acc, &e);
                    self.point_counts[c] += 1;
                }
            }
        }
    }

    fn scale(v: &mut [IndexEstimate], k: usize) {
        for e in v.iter_mut() {
            if k == 0 {
                *e = IndexEstimate { first: f64::NAN, first_se: f64::NAN, total: f64::NAN, total_se: f64::NAN };
                continue;
            }
            let k = k as f64;
            e.first = (e.first / k).clamp(0.0, 1.0);
            e.total = (e.total / k).clamp(0.0, 1.0);
            e.first_se /= k;
            e.total_se /= k;
        }
    }

    fn report(mut self, names: Vec<String>, mode: SensitivityMode, n_base: usize) -> SensitivityReport {
        Self::scale(&mut self.averaged, self.count);
        if let Some(pp) = &mut self.per_point {
            for (c, row) in pp.iter_mut().enumerate() {
                Self::scale(row, self.point_counts[c]);
            }
        }
        let violations = names
            .iter()
            .zip(&self.averaged)
            .filter(|(_, e)| e.total < e.first - 2.0 * e.first_se.max(e.total_se))
            .map(|(n, _)| n.clone())
            .collect();
        SensitivityReport {
            names,
            mode,
            n_base,
            averaged: self.averaged,
            per_point: self.per_point,
            n_draws: self.count + self.constant,
            n_constant: self.constant,
            violations,
        }
    }
}

/// Indices of a vector-valued function `f(x)` with inputs uniform on the
/// box `ranges`.
pub fn sobol_indices<F, R>(
    f: F,
    names: Vec<String>,
    ranges: &[(f64, f64)],
    log_scale: &[bool],
    n_base: usize,
    mode: SensitivityMode,
    rng: &mut R,
) -> Result<SensitivityReport>
where
    F: Fn(&[f64]) -> Vec<f64>,
    R: Rng + ?Sized,
{
    let design = SobolDesign::new(ranges, log_scale, n_base, rng)?;
    let values: Vec<Vec<f64>> = design.rows().iter().map(|r| f(r)).collect();
    let mut avg = Averager::new(ranges.len(), values[0].len(), mode);
    avg.push(&raw_indices(&values, n_base, ranges.len()), n_base, 0.0);
    Ok(avg.report(names, mode, n_base))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityOptions {
    pub n_base: usize,
    pub mode: SensitivityMode,
    /// Evenly spaced posterior draws used, at most.
    pub max_draws: usize,
    /// Indices of a noisy replicate `y` rather than the mean surface: each
    /// cell's variance gains `sigma2`, shrinking all indices alike.
    pub include_noise: bool,
}

impl Default for SensitivityOptions {
    fn default() -> Self {
        Self { n_base: 1000, mode: SensitivityMode::PerPoint, max_draws: 200, include_noise: false }
    }
}

/// Indices of the posterior mean surface, computed per posterior draw and
/// averaged.
pub fn sensitivity_indices<R: Rng + ?Sized>(
    post: &Posterior,
    opts: &SensitivityOptions,
    rng: &mut R,
) -> Result<SensitivityReport> {
    let ctx = &post.context;
    let n_base = opts.n_base;
    let design = SobolDesign::new(&ctx.covariate_ranges(), &ctx.log_scale, n_base, rng)?;
    let rows = design.rows();
    let basis = crate::basis::design_matrix(&ctx.system()?);
    let draws: Vec<_> = post.draws().collect();
    if draws.is_empty() {
        return Err(Error::invalid("posterior has no draws"));
    }
    let take = opts.max_draws.clamp(1, draws.len());
    let p = ctx.n_covariates();
    let mut avg = Averager::new(p, ctx.n_cells(), opts.mode);
    for k in 0..take {
        let d = draws[k * draws.len() / take];
        let coeffs = d
            .state
            .tree
            .leaf_coeffs()
            .ok_or_else(|| Error::invalid("posterior draw has a leaf without coefficients"))?;
        if coeffs.len() == 1 && !opts.include_noise {
            avg.constant += 1;
            continue;
        }
        let prof: Vec<Vec<f64>> =
            coeffs.iter().map(|c| (&basis * DVector::from_column_slice(c)).as_slice().to_vec()).collect();
        let values: Vec<Vec<f64>> = rows.iter().map(|r| prof[d.state.tree.assign_leaf(r)].clone()).collect();
        let noise = if opts.include_noise { d.state.noise.sigma2 } else { 0.0 };
        avg.push(&raw_indices(&values, n_base, p), n_base, noise);
    }
    Ok(avg.report(ctx.covariate_names.clone(), opts.mode, n_base))
}
