mod common;

use common::{geweke, geweke_config, geweke_split, toy_model};
use dosetree::sampler::chain_rng;

#[test]
fn full_conditionals_pass_on_dose_only_toy() {
    let config = geweke_config(0.5);
    let mut rng = chain_rng(11, 0);
    let tests = geweke(toy_model(None, 0.5), &config, 20_000, 20_000, &mut rng);
    for t in &tests {
        assert!(t.p_adjusted > 0.01, "{}: z = {:.2}", t.name, t.z);
    }
}

#[test]
fn harness_detects_a_mismatched_prior() {
    let prior = geweke_config(0.5);
    let mut sampler = prior.clone();
    sampler.variance_priors.b_sigma *= 3.0;
    let mut rng = chain_rng(12, 0);
    let tests = geweke_split(toy_model(None, 0.5), &prior, &sampler, 5_000, 5_000, &mut rng);
    let sigma = tests.iter().find(|t| t.name == "log sigma2").unwrap();
    assert!(sigma.p_adjusted < 1e-6, "{sigma:?}");
}

#[test]
fn tree_moves_pass_with_random_trees() {
    let mut config = geweke_config(0.5);
    config.updates.tree = true;
    let mut rng = chain_rng(14, 0);
    let tests = geweke(toy_model(None, 0.5), &config, 20_000, 40_000, &mut rng);
    for t in &tests {
        assert!(t.p_adjusted > 0.01, "{}: z = {:.2}", t.name, t.z);
    }
}
