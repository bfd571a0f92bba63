//! Single MCMC updates: initialization, tree move, Gibbs sweep and the
//! log posterior.

use std::collections::HashMap;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ChainState, McmcConfig, Model};
use crate::error::{Error, Result};
use crate::likelihood::{
    draw_beta_from_stats, draw_phi, draw_sigma2, draw_tau2, log_marginal_from_stats, residual_quad_sum, CopyKernel,
    CopyView, LeafStats, NoiseModel,
};
use crate::tree::{log_tree_prior, propose_move, MoveKind, MoveProbs, Proposal, Tree, TreePriorParams};

/// Per-particle sufficient statistics at the current correlation values.
/// Refreshed whenever `phi_d` or `phi_t` has moved.
#[derive(Debug, Clone, Default)]
pub struct SweepCache {
    phi: Option<(f64, f64)>,
    particle_stats: Vec<LeafStats>,
}

impl SweepCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn refresh(&mut self, model: &Model, noise: &NoiseModel) -> Result<()> {
        let key = (noise.phi_d, noise.phi_t);
        if self.phi == Some(key) {
            return Ok(());
        }
        let mut kernel = CopyKernel::new(&model.design, &model.corr, noise.phi_d, noise.phi_t)?;
        self.particle_stats = model
            .responses
            .iter()
            .map(|reps| {
                let copies: Vec<CopyView<'_>> = reps.iter().map(|r| r.view()).collect();
                kernel.stats(&copies)
            })
            .collect::<Result<_>>()?;
        self.phi = Some(key);
        Ok(())
    }

    fn leaf_stats(&self, particles: &[usize], n_coeffs: usize) -> LeafStats {
        let mut s = LeafStats::zeros(n_coeffs);
        for &i in particles {
            s += &self.particle_stats[i];
        }
        s
    }

    /// Forget the cached statistics (after the responses change).
    pub fn invalidate(&mut self) {
        self.phi = None;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeStepOutcome {
    pub kind: MoveKind,
    pub accepted: bool,
    /// A leaf marginal likelihood could not be evaluated.
    pub failed: bool,
}

/// One Metropolis-Hastings tree move under an arbitrary leaf log
/// marginal likelihood `leaf_lm(particles)`. Returns the accepted tree, if
/// any. Leaves whose particle sets are unchanged cancel and are not
/// evaluated.
pub fn mh_tree_step_with<R, F>(
    tree: &Tree,
    rows: &[Vec<f64>],
    probs: &MoveProbs,
    params: &TreePriorParams,
    mut leaf_lm: F,
    rng: &mut R,
) -> (Option<Tree>, TreeStepOutcome)
where
    R: Rng + ?Sized,
    F: FnMut(&[usize]) -> Result<f64>,
{
    let (kind, candidate, log_ratio) = match propose_move(tree, rows, probs, params, rng) {
        Proposal::NoOp(kind) => return (None, TreeStepOutcome { kind, accepted: false, failed: false }),
        Proposal::Candidate { kind, tree, log_ratio } => (kind, tree, log_ratio),
    };
    let reject = |failed| (None, TreeStepOutcome { kind, accepted: false, failed });
    if log_ratio == f64::NEG_INFINITY {
        return reject(false);
    }
    let old = tree.partition(rows);
    let new = candidate.partition(rows);
    let mut counts: HashMap<&[usize], i32> = HashMap::new();
    for p in &old {
        *counts.entry(p.as_slice()).or_default() -= 1;
    }
    for p in &new {
        *counts.entry(p.as_slice()).or_default() += 1;
    }
    // deterministic evaluation order
    let mut changed: Vec<(&[usize], i32)> = counts.into_iter().filter(|(_, c)| *c != 0).collect();
    changed.sort();
    let mut delta = 0.0;
    for (particles, sign) in changed {
        match leaf_lm(particles) {
            Ok(v) if v.is_finite() => delta += sign as f64 * v,
            _ => return reject(true),
        }
    }
    if rng.random::<f64>().ln() < delta + log_ratio {
        (Some(candidate), TreeStepOutcome { kind, accepted: true, failed: false })
    } else {
        reject(false)
    }
}

/// Tree move with the leaf coefficients integrated out. On acceptance the
/// leaf coefficients are redrawn from their full conditionals.
pub fn mh_tree_step<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    config: &McmcConfig,
    cache: &mut SweepCache,
    rng: &mut R,
) -> Result<TreeStepOutcome> {
    cache.refresh(model, &state.noise)?;
    let (sigma2, tau2, m) = (state.noise.sigma2, state.tau2, model.n_coeffs());
    let cache_ref = &*cache;
    let (accepted, outcome) = mh_tree_step_with(
        &state.tree,
        model.rows(),
        &config.move_probs,
        &config.tree_prior,
        |ps| log_marginal_from_stats(&cache_ref.leaf_stats(ps, m), &model.penalty, sigma2, tau2),
        rng,
    );
    if let Some(t) = accepted {
        state.tree = t;
        draw_all_beta(state, model, cache, rng)?;
    }
    Ok(outcome)
}

fn draw_all_beta<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    cache: &mut SweepCache,
    rng: &mut R,
) -> Result<()> {
    cache.refresh(model, &state.noise)?;
    let m = model.n_coeffs();
    let coeffs = state
        .tree
        .partition(model.rows())
        .iter()
        .map(|ps| {
            let s = cache.leaf_stats(ps, m);
            draw_beta_from_stats(&s, &model.penalty, state.noise.sigma2, state.tau2, rng).map(|b| b.as_slice().to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    state.tree.set_leaf_coeffs(coeffs)
}

/// Residual profiles `y - B beta` of every replicate, particle-major.
fn residuals(state: &ChainState, model: &Model) -> Result<Vec<(Vec<f64>, Option<Vec<bool>>)>> {
    let coeffs = state
        .tree
        .leaf_coeffs()
        .ok_or_else(|| Error::invalid("state has leaves without coefficients"))?;
    let fitted: Vec<Vec<f64>> = coeffs.iter().map(|c| model.fitted(c)).collect();
    let mut out = Vec::new();
    for (i, reps) in model.responses.iter().enumerate() {
        let f = &fitted[state.tree.assign_leaf(&model.rows()[i])];
        for r in reps {
            let vals = r
                .values
                .iter()
                .zip(f)
                .enumerate()
                .map(|(c, (y, mu))| if r.is_observed(c) { y - mu } else { 0.0 })
                .collect();
            out.push((vals, r.mask.clone()));
        }
    }
    Ok(out)
}

fn views(res: &[(Vec<f64>, Option<Vec<bool>>)]) -> Vec<CopyView<'_>> {
    res.iter().map(|(v, m)| CopyView { values: v, mask: m.as_deref() }).collect()
}

fn penalty_ss(state: &ChainState, model: &Model) -> Result<f64> {
    let coeffs = state
        .tree
        .leaf_coeffs()
        .ok_or_else(|| Error::invalid("state has leaves without coefficients"))?;
    Ok(coeffs
        .iter()
        .map(|c| {
            let b = DVector::from_column_slice(c);
            b.dot(&(model.penalty.matrix() * &b))
        })
        .sum())
}

/// One full sweep: tree move(s), leaf coefficients, `sigma2`, `tau2`,
/// `phi_d` and, for surfaces, `phi_t`. Updates switched off in the
/// configuration are skipped. Refreshes `state.log_post`.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    config: &McmcConfig,
    cache: &mut SweepCache,
    rng: &mut R,
) -> Result<Vec<TreeStepOutcome>> {
    let up = config.updates;
    let mut outcomes = Vec::new();
    let mut beta_fresh = false;
    if up.tree {
        for _ in 0..config.tree_steps_per_sweep {
            let o = mh_tree_step(state, model, config, cache, rng)?;
            beta_fresh |= o.accepted;
            outcomes.push(o);
        }
    }
    // a just-accepted tree already carries a conditional draw of beta
    if up.beta && !beta_fresh {
        draw_all_beta(state, model, cache, rng)?;
    }
    let vp = config.variance_priors;
    if up.sigma2 {
        let res = residuals(state, model)?;
        let (ssr, _, n) = residual_quad_sum(&views(&res), &model.corr, state.noise.phi_d, state.noise.phi_t)?;
        state.noise.sigma2 = draw_sigma2(vp.a_sigma, vp.b_sigma, ssr, n, rng)?;
    }
    if up.tau2 {
        let ss = penalty_ss(state, model)?;
        let n_coef = state.tree.n_leaves() * model.n_coeffs();
        state.tau2 = draw_tau2(vp.a_tau, vp.b_tau, ss, n_coef, rng)?;
    }
    let need_phi = up.phi_d || (up.phi_t && model.is_2d());
    if need_phi {
        let res = residuals(state, model)?;
        let v = views(&res);
        let corr = &model.corr;
        let sigma2 = state.noise.sigma2;
        let lik = |phi_d: f64, phi_t: f64| -> Result<f64> {
            let (q, ld, n) = residual_quad_sum(&v, corr, phi_d, phi_t)?;
            Ok(-0.5 * (n as f64 * (2.0 * std::f64::consts::PI * sigma2).ln() + ld + q / sigma2))
        };
        if up.phi_d {
            let phi_t = state.noise.phi_t;
            state.noise.phi_d = draw_phi(state.noise.phi_d, &model.phi_priors.dose, |p| lik(p, phi_t), rng)?.value;
        }
        if up.phi_t {
            if let Some(prior) = model.phi_priors.time {
                let phi_d = state.noise.phi_d;
                state.noise.phi_t = draw_phi(state.noise.phi_t, &prior, |p| lik(phi_d, p), rng)?.value;
            }
        }
    }
    state.log_post = log_posterior(state, model, config)?;
    Ok(outcomes)
}

/// Components of the unnormalized log posterior; additive constants that
/// do not depend on any sampled quantity are dropped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPosteriorParts {
    pub likelihood: f64,
    pub coefficients: f64,
    pub tree: f64,
    pub sigma2: f64,
    pub tau2: f64,
    pub correlation: f64,
}

impl LogPosteriorParts {
    pub fn total(&self) -> f64 {
        self.likelihood + self.coefficients + self.tree + self.sigma2 + self.tau2 + self.correlation
    }

    fn first_non_finite(&self) -> Option<&'static str> {
        [
            ("likelihood", self.likelihood),
            ("coefficient prior", self.coefficients),
            ("tree prior", self.tree),
            ("sigma2 prior", self.sigma2),
            ("tau2 prior", self.tau2),
            ("correlation prior", self.correlation),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

fn log_inv_gamma_kernel(x: f64, a: f64, b: f64) -> f64 {
    -(a + 1.0) * x.ln() - b / x
}

pub fn log_posterior_parts(state: &ChainState, model: &Model, config: &McmcConfig) -> Result<LogPosteriorParts> {
    let res = residuals(state, model)?;
    let likelihood = crate::likelihood::residual_log_lik(&views(&res), &model.corr, &state.noise)?;
    let m = model.n_coeffs() as f64;
    let n_leaves = state.tree.n_leaves() as f64;
    let tau2 = state.tau2;
    let coefficients = n_leaves * (-0.5 * m * (2.0 * std::f64::consts::PI * tau2).ln() + 0.5 * model.penalty.log_det())
        - penalty_ss(state, model)? / (2.0 * tau2);
    let vp = config.variance_priors;
    Ok(LogPosteriorParts {
        likelihood,
        coefficients,
        tree: log_tree_prior(&state.tree, model.rows(), &config.tree_prior)?,
        sigma2: log_inv_gamma_kernel(state.noise.sigma2, vp.a_sigma, vp.b_sigma),
        tau2: log_inv_gamma_kernel(tau2, vp.a_tau, vp.b_tau),
        correlation: model.phi_priors.log_density(state.noise.phi_d, state.noise.phi_t),
    })
}

/// Unnormalized log posterior density of a state.
pub fn log_posterior(state: &ChainState, model: &Model, config: &McmcConfig) -> Result<f64> {
    Ok(log_posterior_parts(state, model, config)?.total())
}

/// Pooled within-cell variance across replicates, or the overall
/// response variance when no cell has two replicates.
fn moment_sigma2(model: &Model) -> f64 {
    let (mut ss, mut df) = (0.0, 0usize);
    let n_cells = model.context.n_cells();
    for reps in &model.responses {
        for c in 0..n_cells {
            let vals: Vec<f64> = reps.iter().filter(|r| r.is_observed(c)).map(|r| r.values[c]).collect();
            if vals.len() >= 2 {
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                ss += vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
                df += vals.len() - 1;
            }
        }
    }
    if df > 0 {
        return ss / df as f64;
    }
    let all: Vec<f64> = model
        .responses
        .iter()
        .flatten()
        .flat_map(|r| (0..r.values.len()).filter(|&c| r.is_observed(c)).map(move |c| r.values[c]))
        .collect();
    if all.len() < 2 {
        return 0.0;
    }
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (all.len() - 1) as f64
}

pub(crate) const SIGMA2_FLOOR: f64 = 1e-8;

/// Starting state: a single leaf, `tau2` at its prior mode, leaf
/// coefficients from their prior, `sigma2` from replicate variability and
/// both correlations at 0.5. Chains other than the first are spread out:
/// correlations uniform on `[0.1, 0.9]` and `sigma2` scaled by
/// `exp(U(-1, 1))`.
pub fn initialize_state<R: Rng + ?Sized>(
    model: &Model,
    config: &McmcConfig,
    chain_index: usize,
    rng: &mut R,
) -> Result<ChainState> {
    let vp = config.variance_priors;
    let tau2 = vp.b_tau / (vp.a_tau + 1.0);
    let mut sigma2 = moment_sigma2(model);
    if !(sigma2 > SIGMA2_FLOOR) {
        log::warn!("response replicates show no variability; sigma2 starts at {SIGMA2_FLOOR}");
        sigma2 = SIGMA2_FLOOR;
    }
    let (mut phi_d, mut phi_t) = (0.5, if model.is_2d() { 0.5 } else { 0.0 });
    if chain_index > 0 {
        phi_d = rng.random_range(0.1..0.9);
        if model.is_2d() {
            phi_t = rng.random_range(0.1..0.9);
        }
        sigma2 *= rng.random_range(-1.0f64..1.0).exp();
    }
    let chol = model
        .penalty
        .matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("penalty matrix is not positive definite".into()))?;
    let z = DVector::from_fn(model.n_coeffs(), |_, _| StandardNormal.sample(rng));
    let beta = chol
        .l()
        .tr_solve_lower_triangular(&z)
        .ok_or_else(|| Error::Numerical("penalty factor is singular".into()))?
        * tau2.sqrt();
    let mut tree = Tree::root_only();
    tree.set_leaf_coeffs(vec![beta.as_slice().to_vec()])?;
    let mut state = ChainState { tree, noise: NoiseModel { sigma2, phi_d, phi_t }, tau2, log_post: 0.0 };
    let parts = log_posterior_parts(&state, model, config)?;
    if let Some(name) = parts.first_non_finite() {
        return Err(Error::Numerical(format!("initial log posterior is not finite: {name} term")));
    }
    state.log_post = parts.total();
    Ok(state)
}
