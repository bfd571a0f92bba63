//! Running whole chains.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{gibbs_sweep, initialize_state, AcceptanceTable, ChainState, Draw, McmcConfig, Model, ModelContext, PosteriorChain, SweepCache};
use crate::error::Result;

/// Random stream of chain `chain_index`: ChaCha8 seeded with the master
/// seed, stream number set to the chain index. Streams never overlap, and
/// each chain's draws depend only on `(seed, chain_index)`.
pub fn chain_rng(seed: u64, chain_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain_index as u64);
    rng
}

/// Run one chain from its standard starting state.
pub fn run_chain(model: &Model, config: &McmcConfig, chain_index: usize) -> Result<PosteriorChain> {
    config.validate()?;
    let mut rng = chain_rng(config.seed, chain_index);
    let state = initialize_state(model, config, chain_index, &mut rng)?;
    run_chain_from(model, config, chain_index, state, &mut rng)
}

/// Run a chain from a given state with a given random stream.
pub fn run_chain_from(
    model: &Model,
    config: &McmcConfig,
    chain_index: usize,
    mut state: ChainState,
    rng: &mut ChaCha8Rng,
) -> Result<PosteriorChain> {
    let mut cache = SweepCache::new();
    let mut acceptance = AcceptanceTable::default();
    let mut draws = Vec::with_capacity(config.n_stored());
    for iter in 1..=config.iterations {
        let outcomes = gibbs_sweep(&mut state, model, config, &mut cache, rng)?;
        if iter > config.burn_in {
            for o in outcomes {
                acceptance.record(o.kind, o.accepted, o.failed);
            }
        }
        if cfg!(debug_assertions) && iter % 1000 == 0 {
            let fresh = super::log_posterior(&state, model, config)?;
            debug_assert!((fresh - state.log_post).abs() <= 1e-6 * fresh.abs().max(1.0));
        }
        if config.is_stored(iter) {
            draws.push(Draw { iteration: iter, state: state.clone() });
        }
        if iter % 10_000 == 0 {
            log::debug!("chain {chain_index}: iteration {iter}, {} leaves", state.tree.n_leaves());
        }
    }
    Ok(PosteriorChain { chain_index, seed: config.seed, config: config.clone(), draws, acceptance })
}

/// A finished fit: all chains plus what is needed to evaluate them.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub context: ModelContext,
    pub chains: Vec<PosteriorChain>,
}

impl Posterior {
    pub fn draws(&self) -> impl Iterator<Item = &Draw> {
        self.chains.iter().flat_map(|c| c.draws.iter())
    }

    pub fn n_draws(&self) -> usize {
        self.chains.iter().map(|c| c.draws.len()).sum()
    }

    pub fn acceptance(&self) -> AcceptanceTable {
        let mut t = AcceptanceTable::default();
        for c in &self.chains {
            t.merge(&c.acceptance);
        }
        t
    }
}

/// Run `config.n_chains` chains in parallel. The result does not depend
/// on the number of threads.
pub fn run_chains(model: &Model, config: &McmcConfig) -> Result<Posterior> {
    config.validate()?;
    let chains = (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(model, config, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(Posterior { context: model.context.clone(), chains })
}
