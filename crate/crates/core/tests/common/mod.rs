//! Shared fixtures for the integration and acceptance tests: a small
//! toy model and a Geweke joint-distribution harness.

#![allow(dead_code)]

use dosetree::basis::{Grid1D, SplineSettings};
use dosetree::datastore::Replicate;
use dosetree::likelihood::{draw_inv_gamma, DistanceMode, NoiseModel, PhiPrior};
use dosetree::sampler::{effective_sample_size, gibbs_sweep, ChainState, McmcConfig, Model, ModelContext, SweepCache, UpdateFlags};
use dosetree::tree::{sample_tree_prior, Node, SplitRule, Tree};
use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

pub const TOY_PARTICLES: usize = 3;
pub const TOY_DOSES: usize = 5;
pub const TOY_REPLICATES: usize = 2;

/// Three particles on one covariate, five index-spaced doses and, for
/// `n_time = Some(n)`, `n` exposure times. Responses start at zero.
pub fn toy_model(n_time: Option<usize>, eta: f64) -> Model {
    let cells = TOY_DOSES * n_time.unwrap_or(1);
    let context = ModelContext {
        spline: SplineSettings { eta, ..Default::default() },
        distance: DistanceMode::Index,
        dose: Grid1D::index(TOY_DOSES).unwrap(),
        time: n_time.map(|n| Grid1D::index(n).unwrap()),
        particles: (0..TOY_PARTICLES).map(|i| format!("p{i}")).collect(),
        covariate_names: vec!["x".into()],
        log_scale: vec![false],
        covariates: vec![vec![0.1], vec![0.5], vec![0.9]],
    };
    let responses = (0..TOY_PARTICLES)
        .map(|_| (0..TOY_REPLICATES).map(|k| Replicate::complete(format!("r{k}"), vec![0.0; cells])).collect())
        .collect();
    Model::from_context(context, responses, &Default::default()).unwrap()
}

/// Two leaves: `{p0}` and `{p1, p2}`.
pub fn toy_tree() -> Tree {
    Tree::from_root(Node::split(SplitRule::new(0, 0.1), Node::leaf(), Node::leaf()))
}

/// Proper, light-tailed variance priors so every test function has finite
/// moments; the tree is held fixed.
pub fn geweke_config(eta: f64) -> McmcConfig {
    let mut c = McmcConfig { eta, ..Default::default() };
    c.variance_priors.a_sigma = 5.0;
    c.variance_priors.b_sigma = 2.0;
    c.variance_priors.a_tau = 5.0;
    c.variance_priors.b_tau = 4.0;
    c.updates = UpdateFlags { tree: false, ..UpdateFlags::default() };
    c
}

/// Exact draw from a correlation prior by rejection from the uniform.
pub fn draw_phi_prior<R: Rng + ?Sized>(prior: &PhiPrior, rng: &mut R) -> f64 {
    let top = (0..=4000).map(|k| prior.log_density(k as f64 / 4001.0)).fold(f64::NEG_INFINITY, f64::max) + 0.05;
    loop {
        let phi: f64 = rng.random();
        if rng.random::<f64>().ln() < prior.log_density(phi) - top {
            return phi;
        }
    }
}

/// Draw every parameter from its prior, for a fixed tree structure.
pub fn draw_prior_state<R: Rng + ?Sized>(model: &Model, config: &McmcConfig, tree: &Tree, rng: &mut R) -> ChainState {
    let vp = config.variance_priors;
    let sigma2 = draw_inv_gamma(vp.a_sigma, vp.b_sigma, rng).unwrap();
    let tau2 = draw_inv_gamma(vp.a_tau, vp.b_tau, rng).unwrap();
    let phi_d = draw_phi_prior(&model.phi_priors.dose, rng);
    let phi_t = model.phi_priors.time.map_or(0.0, |p| draw_phi_prior(&p, rng));
    let chol = model.penalty.matrix().clone().cholesky().unwrap();
    let m = model.n_coeffs();
    let mut tree = tree.structure();
    let coeffs = (0..tree.n_leaves())
        .map(|_| {
            let z = DVector::from_fn(m, |_, _| StandardNormal.sample(rng));
            let b = chol.l().tr_solve_lower_triangular(&z).unwrap() * tau2.sqrt();
            b.as_slice().to_vec()
        })
        .collect();
    tree.set_leaf_coeffs(coeffs).unwrap();
    ChainState { tree, noise: NoiseModel { sigma2, phi_d, phi_t }, tau2, log_post: 0.0 }
}

/// Replicate profiles drawn from the likelihood given a state.
pub fn simulate_responses<R: Rng + ?Sized>(model: &Model, state: &ChainState, rng: &mut R) -> Vec<Vec<Replicate>> {
    let r = model.corr.matrix(state.noise.phi_d, state.noise.phi_t).unwrap();
    let l = r.cholesky().unwrap().l();
    let coeffs = state.tree.leaf_coeffs().unwrap();
    let sd = state.noise.sigma2.sqrt();
    model
        .responses
        .iter()
        .enumerate()
        .map(|(i, reps)| {
            let mean = DVector::from_vec(model.fitted(coeffs[state.tree.assign_leaf(&model.rows()[i])]));
            reps.iter()
                .map(|rep| {
                    let z = DVector::from_fn(mean.len(), |_, _| StandardNormal.sample(rng));
                    Replicate::complete(rep.label.clone(), (&mean + &l * z * sd).as_slice().to_vec())
                })
                .collect()
        })
        .collect()
}

/// The pre-registered Geweke test functions.
pub fn geweke_functions(two_d: bool) -> Vec<(&'static str, fn(&ChainState) -> f64)> {
    let mut g: Vec<(&'static str, fn(&ChainState) -> f64)> = vec![
        ("log sigma2", |s| s.noise.sigma2.ln()),
        ("(log sigma2)^2", |s| s.noise.sigma2.ln().powi(2)),
        ("log tau2", |s| s.tau2.ln()),
        ("(log tau2)^2", |s| s.tau2.ln().powi(2)),
        ("phi_d", |s| s.noise.phi_d),
        ("phi_d^2", |s| s.noise.phi_d.powi(2)),
        ("beta[0] leaf 0", |s| s.tree.leaf_coeffs().unwrap()[0][0]),
        ("beta[last] leaf 1", |s| *s.tree.leaf_coeffs().unwrap()[1].last().unwrap()),
        ("beta[0]^2 leaf 1", |s| s.tree.leaf_coeffs().unwrap()[1][0].powi(2)),
    ];
    if two_d {
        g.push(("phi_t", |s| s.noise.phi_t));
        g.push(("phi_t^2", |s| s.noise.phi_t.powi(2)));
    }
    g
}

fn tree_has(s: &ChainState, threshold: f64) -> f64 {
    if s.tree.root().rule().is_some_and(|r| r.threshold == threshold) { 1.0 } else { 0.0 }
}

#[derive(Debug, Clone)]
pub struct GewekeTest {
    pub name: &'static str,
    pub z: f64,
    /// Bonferroni-adjusted two-sided p-value.
    pub p_adjusted: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Compare `n_mc` independent prior draws (marginal-conditional) with a
/// successive-conditional chain of `n_sc` sweeps that alternates new data
/// given the parameters with one sampler sweep given the data.
pub fn geweke<R: Rng + ?Sized>(model: Model, config: &McmcConfig, n_mc: usize, n_sc: usize, rng: &mut R) -> Vec<GewekeTest> {
    geweke_split(model, config, config, n_mc, n_sc, rng)
}

/// [`geweke`] with the prior simulator and the sampler configured
/// separately; any mismatch should show up as failing tests.
pub fn geweke_split<R: Rng + ?Sized>(
    mut model: Model,
    prior: &McmcConfig,
    sampler: &McmcConfig,
    n_mc: usize,
    n_sc: usize,
    rng: &mut R,
) -> Vec<GewekeTest> {
    let tree = toy_tree();
    let random_tree = sampler.updates.tree;
    let mut funcs = geweke_functions(model.is_2d());
    if random_tree {
        funcs.retain(|(n, _)| !n.contains("leaf"));
        funcs.push(("n_leaves", |s| s.tree.n_leaves() as f64));
        funcs.push(("splits on x0 <= 0.1", |s| tree_has(s, 0.1)));
    }
    let rows = model.rows().to_vec();
    let draw = |model: &Model, rng: &mut R| {
        let t = if random_tree { sample_tree_prior(&rows, &prior.tree_prior, rng) } else { tree.clone() };
        draw_prior_state(model, prior, &t, rng)
    };
    let mut mc = vec![Vec::with_capacity(n_mc); funcs.len()];
    for _ in 0..n_mc {
        let s = draw(&model, rng);
        for (k, (_, g)) in funcs.iter().enumerate() {
            mc[k].push(g(&s));
        }
    }
    let mut sc = vec![Vec::with_capacity(n_sc); funcs.len()];
    let mut state = draw(&model, rng);
    let mut cache = SweepCache::new();
    for _ in 0..n_sc {
        let y = simulate_responses(&model, &state, rng);
        model.set_responses(y);
        cache.invalidate();
        gibbs_sweep(&mut state, &model, sampler, &mut cache, rng).unwrap();
        for (k, (_, g)) in funcs.iter().enumerate() {
            sc[k].push(g(&state));
        }
    }
    let normal = Normal::standard();
    let m = funcs.len() as f64;
    funcs
        .iter()
        .enumerate()
        .map(|(k, (name, _))| {
            let (m1, v1) = mean_var(&mc[k]);
            let (m2, v2) = mean_var(&sc[k]);
            let ess = effective_sample_size(&sc[k]).max(1.0);
            let z = (m1 - m2) / (v1 / n_mc as f64 + v2 / ess).sqrt();
            let p = 2.0 * (1.0 - normal.cdf(z.abs()));
            GewekeTest { name, z, p_adjusted: (p * m).min(1.0) }
        })
        .collect()
}
