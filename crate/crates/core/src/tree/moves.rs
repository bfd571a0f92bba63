//! Grow / prune / change / swap proposals for tree Metropolis-Hastings.
//!
//! Every proposal carries `log p(T') - log p(T) + log q(T | T') - log q(T' | T)`
//! so that the sampler only has to add the change in integrated
//! likelihood. Move-type probabilities are fixed regardless of the current
//! tree; a move that is structurally impossible is a no-op and counts as
//! a rejected proposal. Candidates with an empty leaf are returned with a
//! log ratio of `-inf`.

use rand::Rng;

use super::prior::{available_splits, log_tree_prior, TreePriorParams};
use super::{Node, SplitRule, Tree};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MoveKind {
    Grow,
    Prune,
    Change,
    Swap,
}

impl MoveKind {
    pub const ALL: [MoveKind; 4] = [MoveKind::Grow, MoveKind::Prune, MoveKind::Change, MoveKind::Swap];

    pub fn name(self) -> &'static str {
        match self {
            MoveKind::Grow => "grow",
            MoveKind::Prune => "prune",
            MoveKind::Change => "change",
            MoveKind::Swap => "swap",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveProbs {
    pub grow: f64,
    pub prune: f64,
    pub change: f64,
    pub swap: f64,
}

impl Default for MoveProbs {
    fn default() -> Self {
        Self {
            grow: 0.1,
            prune: 0.1,
            change: 0.6,
            swap: 0.2,
        }
    }
}

impl MoveProbs {
    pub fn as_array(&self) -> [f64; 4] {
        [self.grow, self.prune, self.change, self.swap]
    }

    pub fn prob(&self, kind: MoveKind) -> f64 {
        self.as_array()[kind.index()]
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.as_array();
        if a.iter().any(|&p| !(p >= 0.0)) || (a.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "move probabilities must be nonnegative and sum to 1, got {a:?}"
            )));
        }
        Ok(())
    }

    fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> MoveKind {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for kind in MoveKind::ALL {
            acc += self.prob(kind);
            if u < acc {
                return kind;
            }
        }
        // rounding: fall back to the last move with positive probability
        *MoveKind::ALL
            .iter()
            .rev()
            .find(|&&k| self.prob(k) > 0.0)
            .unwrap_or(&MoveKind::Change)
    }
}

#[derive(Debug, Clone)]
pub enum Proposal {
    /// Nothing to do for the chosen move; treated as a rejection.
    NoOp(MoveKind),
    Candidate {
        kind: MoveKind,
        tree: Tree,
        /// Prior ratio times reverse / forward proposal ratio, in logs.
        log_ratio: f64,
    },
}

impl Proposal {
    pub fn kind(&self) -> MoveKind {
        match self {
            Proposal::NoOp(k) => *k,
            Proposal::Candidate { kind, .. } => *kind,
        }
    }
}

/// Draw a candidate tree from the four-move proposal.
pub fn propose_move<R: Rng + ?Sized>(
    tree: &Tree,
    rows: &[Vec<f64>],
    probs: &MoveProbs,
    params: &TreePriorParams,
    rng: &mut R,
) -> Proposal {
    let kind = probs.pick(rng);
    let drawn = match kind {
        MoveKind::Grow => grow(tree, rows, probs, rng),
        MoveKind::Prune => prune(tree, rows, probs, rng),
        MoveKind::Change => change(tree, rows, rng),
        MoveKind::Swap => swap(tree, rows, rng),
    };
    let Some((candidate, log_q_ratio)) = drawn else {
        return Proposal::NoOp(kind);
    };
    let log_ratio = if log_q_ratio == f64::NEG_INFINITY || !candidate.is_valid_on(rows) {
        f64::NEG_INFINITY
    } else {
        match (
            log_tree_prior(&candidate, rows, params),
            log_tree_prior(tree, rows, params),
        ) {
            (Ok(new), Ok(old)) => new - old + log_q_ratio,
            _ => f64::NEG_INFINITY,
        }
    };
    Proposal::Candidate {
        kind,
        tree: candidate,
        log_ratio,
    }
}

fn pick<'a, T, R: Rng + ?Sized>(items: &'a [T], rng: &mut R) -> Option<&'a T> {
    (!items.is_empty()).then(|| &items[rng.random_range(0..items.len())])
}

/// Returns (candidate, log q(T|T') - log q(T'|T)).
fn grow<R: Rng + ?Sized>(
    tree: &Tree,
    rows: &[Vec<f64>],
    probs: &MoveProbs,
    rng: &mut R,
) -> Option<(Tree, f64)> {
    let leaves = tree.leaf_paths();
    let path = pick(&leaves, rng)?.clone();
    let avail = available_splits(rows, &tree.particles_at(&path, rows));
    let rule = avail.draw(rng)?;
    let log_fwd = probs.grow.ln() - (leaves.len() as f64).ln() + avail.log_rule_prob(&rule)?;

    let mut cand = tree.clone();
    *cand.node_mut(&path)? = Node::split(rule, Node::leaf(), Node::leaf());
    let log_rev = probs.prune.ln() - (cand.prunable_paths().len() as f64).ln();
    Some((cand, log_rev - log_fwd))
}

fn prune<R: Rng + ?Sized>(
    tree: &Tree,
    rows: &[Vec<f64>],
    probs: &MoveProbs,
    rng: &mut R,
) -> Option<(Tree, f64)> {
    let prunable = tree.prunable_paths();
    let path = pick(&prunable, rng)?.clone();
    let log_fwd = probs.prune.ln() - (prunable.len() as f64).ln();
    let rule = tree.node(&path)?.rule()?.clone();

    let mut cand = tree.clone();
    *cand.node_mut(&path)? = Node::leaf();
    let avail = available_splits(rows, &cand.particles_at(&path, rows));
    let log_rev = match avail.log_rule_prob(&rule) {
        Some(lp) => probs.grow.ln() - (cand.n_leaves() as f64).ln() + lp,
        None => f64::NEG_INFINITY,
    };
    Some((cand, log_rev - log_fwd))
}

fn change<R: Rng + ?Sized>(tree: &Tree, rows: &[Vec<f64>], rng: &mut R) -> Option<(Tree, f64)> {
    let internal = tree.internal_paths();
    let path = pick(&internal, rng)?.clone();
    let old = tree.node(&path)?.rule()?.clone();
    let avail = available_splits(rows, &tree.particles_at(&path, rows));
    let new = avail.draw(rng)?;
    // the variable draw is common to both directions; only thresholds differ
    let n_thr = |r: &SplitRule| avail.thresholds(r.var).map_or(0, |t| t.len()) as f64;
    let log_q_ratio = if n_thr(&old) == 0.0 {
        f64::NEG_INFINITY
    } else {
        n_thr(&new).ln() - n_thr(&old).ln()
    };

    let mut cand = tree.clone();
    if let Node::Internal { rule, .. } = cand.node_mut(&path)? {
        *rule = new;
    }
    Some((cand, log_q_ratio))
}

/// Child sets a swap at `node` may exchange rules with, with probabilities.
fn swap_options(node: &Node) -> Vec<(SwapTarget, f64)> {
    let Node::Internal { left, right, .. } = node else {
        return Vec::new();
    };
    match (left.rule(), right.rule()) {
        (Some(l), Some(r)) if l == r => vec![(SwapTarget::Both, 1.0)],
        (Some(_), Some(_)) => vec![(SwapTarget::Left, 0.5), (SwapTarget::Right, 0.5)],
        (Some(_), None) => vec![(SwapTarget::Left, 1.0)],
        (None, Some(_)) => vec![(SwapTarget::Right, 1.0)],
        (None, None) => Vec::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SwapTarget {
    Left,
    Right,
    Both,
}

fn swap<R: Rng + ?Sized>(tree: &Tree, _rows: &[Vec<f64>], rng: &mut R) -> Option<(Tree, f64)> {
    let parents: Vec<_> = tree
        .internal_paths()
        .into_iter()
        .filter(|p| tree.node(p).is_some_and(|n| !swap_options(n).is_empty()))
        .collect();
    let path = pick(&parents, rng)?.clone();
    let options = swap_options(tree.node(&path)?);
    let (target, fwd_prob) = if options.len() == 1 {
        options[0]
    } else {
        options[rng.random_range(0..options.len())]
    };

    let mut cand = tree.clone();
    let Node::Internal { rule, left, right } = cand.node_mut(&path)? else {
        return None;
    };
    let parent_rule = rule.clone();
    let set_rule = |n: &mut Node, r: SplitRule| {
        if let Node::Internal { rule, .. } = n {
            *rule = r;
        }
    };
    match target {
        SwapTarget::Left => {
            *rule = left.rule()?.clone();
            set_rule(left, parent_rule);
        }
        SwapTarget::Right => {
            *rule = right.rule()?.clone();
            set_rule(right, parent_rule);
        }
        SwapTarget::Both => {
            *rule = left.rule()?.clone();
            set_rule(left, parent_rule.clone());
            set_rule(right, parent_rule);
        }
    }
    // the tree shape is unchanged, so only the child choice can differ
    let rev_prob = swap_options(cand.node(&path)?)
        .into_iter()
        .find(|(t, _)| *t == target)
        .map_or(0.0, |(_, p)| p);
    Some((cand, rev_prob.ln() - fwd_prob.ln()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::prior::sample_tree_prior;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rows(n: usize, p: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..p).map(|_| rng.random::<f64>()).collect())
            .collect()
    }

    fn only(kind: MoveKind) -> MoveProbs {
        let mut p = [0.0; 4];
        p[kind.index()] = 1.0;
        MoveProbs {
            grow: p[0],
            prune: p[1],
            change: p[2],
            swap: p[3],
        }
    }

    #[test]
    fn prune_on_root_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = rows(5, 2, 1);
        let p = propose_move(&Tree::root_only(), &r, &only(MoveKind::Prune), &TreePriorParams::default(), &mut rng);
        assert!(matches!(p, Proposal::NoOp(MoveKind::Prune)));
        let p = propose_move(&Tree::root_only(), &r, &only(MoveKind::Swap), &TreePriorParams::default(), &mut rng);
        assert!(matches!(p, Proposal::NoOp(MoveKind::Swap)));
    }

    #[test]
    fn grow_then_prune_restores_tree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = rows(20, 3, 2);
        let params = TreePriorParams::default();
        let mut checked = 0;
        for _ in 0..200 {
            let t = sample_tree_prior(&r, &params, &mut rng);
            let Proposal::Candidate { tree: grown, log_ratio, .. } =
                propose_move(&t, &r, &MoveProbs { grow: 1.0, prune: 0.0, change: 0.0, swap: 0.0 }, &params, &mut rng)
            else {
                continue;
            };
            // no prune mass in this proposal, so the reverse move is impossible
            assert_eq!(log_ratio, f64::NEG_INFINITY);
            assert_eq!(grown.n_leaves(), t.n_leaves() + 1);
            // collapse the node that grow created
            let new_node = grown
                .prunable_paths()
                .into_iter()
                .find(|p| t.node(p).is_some_and(|n| n.is_leaf()))
                .unwrap();
            let mut back = grown.clone();
            *back.node_mut(&new_node).unwrap() = Node::leaf();
            assert_eq!(back, t);
            checked += 1;
        }
        assert!(checked > 100);
    }

    #[test]
    fn grow_and_prune_ratios_are_reciprocal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = rows(15, 3, 4);
        let params = TreePriorParams::default();
        let probs = MoveProbs::default();
        for _ in 0..200 {
            let t = sample_tree_prior(&r, &params, &mut rng);
            if let Some((cand, lq)) = grow(&t, &r, &probs, &mut rng) {
                let fwd = log_tree_prior(&cand, &r, &params).unwrap() - log_tree_prior(&t, &r, &params).unwrap() + lq;
                // the unique prune that undoes this grow
                let prunable = cand.prunable_paths();
                let path = prunable
                    .iter()
                    .find(|p| t.node(p).is_some_and(|n| n.is_leaf()))
                    .unwrap();
                let mut back = cand.clone();
                *back.node_mut(path).unwrap() = Node::leaf();
                let rule = cand.node(path).unwrap().rule().unwrap().clone();
                let avail = available_splits(&r, &back.particles_at(path, &r));
                let lq_back = (probs.grow.ln() - (back.n_leaves() as f64).ln() + avail.log_rule_prob(&rule).unwrap())
                    - (probs.prune.ln() - (prunable.len() as f64).ln());
                let bwd = log_tree_prior(&back, &r, &params).unwrap() - log_tree_prior(&cand, &r, &params).unwrap() + lq_back;
                assert!((fwd + bwd).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn invalid_candidates_get_negative_infinity() {
        // x0 <= 0.5 ? (x0 <= 0.2 ? . : .) : . ; changing the root to x0 <= 0.1
        // empties the inner right leaf
        let r = vec![vec![0.1], vec![0.2], vec![0.5], vec![0.9]];
        let t = Tree::from_root(Node::split(
            SplitRule::new(0, 0.5),
            Node::split(SplitRule::new(0, 0.2), Node::leaf(), Node::leaf()),
            Node::leaf(),
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut saw_invalid = false;
        for _ in 0..200 {
            if let Proposal::Candidate { tree, log_ratio, .. } =
                propose_move(&t, &r, &only(MoveKind::Change), &TreePriorParams::default(), &mut rng)
            {
                if !tree.is_valid_on(&r) {
                    saw_invalid = true;
                    assert_eq!(log_ratio, f64::NEG_INFINITY);
                } else {
                    assert!(log_ratio.is_finite());
                }
            }
        }
        assert!(saw_invalid);
    }

    #[test]
    fn swap_exchanges_parent_and_child_rules() {
        let r = rows(30, 2, 6);
        let t = Tree::from_root(Node::split(
            SplitRule::new(0, 0.5),
            Node::split(SplitRule::new(1, 0.5), Node::leaf(), Node::leaf()),
            Node::leaf(),
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let Proposal::Candidate { tree, .. } =
            propose_move(&t, &r, &only(MoveKind::Swap), &TreePriorParams::default(), &mut rng)
        else {
            panic!("swap should be possible");
        };
        assert_eq!(tree.root().rule(), Some(&SplitRule::new(1, 0.5)));
        assert_eq!(tree.node(&[false]).unwrap().rule(), Some(&SplitRule::new(0, 0.5)));
    }

    #[test]
    fn swap_with_identical_children_swaps_both() {
        // lattice so that 0.5 is an observed value of both covariates
        let r: Vec<Vec<f64>> = (0..16).map(|i| vec![0.25 * (1 + i % 4) as f64, 0.25 * (1 + i / 4) as f64]).collect();
        let child = SplitRule::new(1, 0.5);
        let t = Tree::from_root(Node::split(
            SplitRule::new(0, 0.5),
            Node::split(child.clone(), Node::leaf(), Node::leaf()),
            Node::split(child.clone(), Node::leaf(), Node::leaf()),
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let Proposal::Candidate { tree, log_ratio, .. } =
            propose_move(&t, &r, &only(MoveKind::Swap), &TreePriorParams::default(), &mut rng)
        else {
            panic!("swap should be possible");
        };
        assert_eq!(tree.root().rule(), Some(&child));
        assert_eq!(tree.node(&[false]).unwrap().rule(), Some(&SplitRule::new(0, 0.5)));
        assert_eq!(tree.node(&[true]).unwrap().rule(), Some(&SplitRule::new(0, 0.5)));
        assert!(log_ratio.is_finite());
    }

    /// Metropolis-Hastings with a flat likelihood must leave the tree prior
    /// invariant. Compared against independent prior draws.
    #[test]
    fn flat_likelihood_chain_recovers_prior() {
        let r = rows(24, 6, 11);
        let params = TreePriorParams::default();
        let probs = MoveProbs::default();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 30_000;
        let mut mh = [0usize; 6];
        let mut t = Tree::root_only();
        for _ in 0..n {
            if let Proposal::Candidate { tree, log_ratio, .. } = propose_move(&t, &r, &probs, &params, &mut rng) {
                if rng.random::<f64>().ln() < log_ratio {
                    t = tree;
                }
            }
            mh[(t.n_leaves() - 1).min(5)] += 1;
        }
        let mut direct = [0usize; 6];
        for _ in 0..n {
            direct[(sample_tree_prior(&r, &params, &mut rng).n_leaves() - 1).min(5)] += 1;
        }
        let tv: f64 = mh
            .iter()
            .zip(&direct)
            .map(|(&a, &b)| (a as f64 - b as f64).abs() / n as f64)
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.04, "tv={tv} mh={mh:?} direct={direct:?}");
    }
}
