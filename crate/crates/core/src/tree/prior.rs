//! Stochastic tree-generating prior.
//!
//! A node at depth `q` (root at `q = 0`) splits with probability
//! `alpha * (1 + q)^-nu`; on a split the variable is uniform over the
//! variables admitting a split with two nonempty children, and the
//! threshold uniform over the observed values doing so.

use rand::Rng;

use super::{Node, SplitRule, Tree};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreePriorParams {
    pub alpha: f64,
    pub nu: f64,
}

impl Default for TreePriorParams {
    fn default() -> Self {
        Self { alpha: 0.95, nu: 2.0 }
    }
}

impl TreePriorParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) || !(self.nu >= 0.0) {
            return Err(Error::Config(format!(
                "tree prior needs alpha in [0,1) and nu >= 0, got alpha={} nu={}",
                self.alpha, self.nu
            )));
        }
        Ok(())
    }
}

/// Probability that a node at `depth` is internal.
pub fn p_split(depth: usize, params: &TreePriorParams) -> f64 {
    params.alpha * (1.0 + depth as f64).powf(-params.nu)
}

/// Split candidates for one node: every variable with at least one
/// threshold, and for each the sorted thresholds leaving both sides
/// nonempty (all distinct values but the largest).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AvailableSplits {
    pub by_var: Vec<(usize, Vec<f64>)>,
}

impl AvailableSplits {
    pub fn is_empty(&self) -> bool {
        self.by_var.is_empty()
    }

    pub fn n_vars(&self) -> usize {
        self.by_var.len()
    }

    pub fn thresholds(&self, var: usize) -> Option<&[f64]> {
        self.by_var
            .iter()
            .find(|(v, _)| *v == var)
            .map(|(_, t)| t.as_slice())
    }

    /// Log probability of drawing `rule` (uniform variable, then uniform
    /// threshold); `None` if the rule is not available.
    pub fn log_rule_prob(&self, rule: &SplitRule) -> Option<f64> {
        let t = self.thresholds(rule.var)?;
        t.contains(&rule.threshold)
            .then(|| -(self.n_vars() as f64).ln() - (t.len() as f64).ln())
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<SplitRule> {
        if self.is_empty() {
            return None;
        }
        let (var, t) = &self.by_var[rng.random_range(0..self.by_var.len())];
        let threshold = t[rng.random_range(0..t.len())];
        Some(SplitRule::new(*var, threshold))
    }
}

pub fn available_splits(rows: &[Vec<f64>], subset: &[usize]) -> AvailableSplits {
    let p = rows.first().map_or(0, |r| r.len());
    let mut by_var = Vec::new();
    let mut vals = Vec::with_capacity(subset.len());
    for var in 0..p {
        vals.clear();
        vals.extend(subset.iter().map(|&i| rows[i][var]));
        vals.sort_by(|a, b| a.total_cmp(b));
        vals.dedup();
        if vals.len() >= 2 {
            by_var.push((var, vals[..vals.len() - 1].to_vec()));
        }
    }
    AvailableSplits { by_var }
}

/// Draw a tree from the prior, top-down.
pub fn sample_tree_prior<R: Rng + ?Sized>(
    rows: &[Vec<f64>],
    params: &TreePriorParams,
    rng: &mut R,
) -> Tree {
    fn grow<R: Rng + ?Sized>(
        rows: &[Vec<f64>],
        subset: Vec<usize>,
        depth: usize,
        params: &TreePriorParams,
        rng: &mut R,
    ) -> Node {
        let avail = available_splits(rows, &subset);
        if avail.is_empty() || !rng.random_bool(p_split(depth, params).clamp(0.0, 1.0)) {
            return Node::leaf();
        }
        let rule = avail.draw(rng).expect("nonempty");
        let (l, r): (Vec<usize>, Vec<usize>) =
            subset.into_iter().partition(|&i| rule.goes_left(&rows[i]));
        let left = grow(rows, l, depth + 1, params, rng);
        let right = grow(rows, r, depth + 1, params, rng);
        Node::split(rule, left, right)
    }
    Tree::from_root(grow(rows, (0..rows.len()).collect(), 0, params, rng))
}

/// Log prior probability of a tree structure on the given covariates.
///
/// Internal nodes contribute `log p_split + log P(rule)`; leaves that
/// could have split contribute `log(1 - p_split)`; leaves with no
/// available split contribute nothing.
pub fn log_tree_prior(tree: &Tree, rows: &[Vec<f64>], params: &TreePriorParams) -> Result<f64> {
    fn go(
        n: &Node,
        rows: &[Vec<f64>],
        subset: Vec<usize>,
        depth: usize,
        params: &TreePriorParams,
    ) -> Result<f64> {
        if subset.is_empty() {
            return Err(Error::invalid("tree has a node with no particles"));
        }
        let avail = available_splits(rows, &subset);
        let ps = p_split(depth, params);
        match n {
            Node::Leaf(_) => Ok(if avail.is_empty() { 0.0 } else { (1.0 - ps).ln() }),
            Node::Internal { rule, left, right } => {
                let rule_lp = avail.log_rule_prob(rule).ok_or_else(|| {
                    Error::invalid(format!(
                        "split x{} <= {} is not available at depth {depth}",
                        rule.var, rule.threshold
                    ))
                })?;
                let (l, r): (Vec<usize>, Vec<usize>) =
                    subset.into_iter().partition(|&i| rule.goes_left(&rows[i]));
                Ok(ps.ln()
                    + rule_lp
                    + go(left, rows, l, depth + 1, params)?
                    + go(right, rows, r, depth + 1, params)?)
            }
        }
    }
    go(tree.root(), rows, (0..rows.len()).collect(), 0, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn four_particles() -> Vec<Vec<f64>> {
        vec![
            vec![1.0, 10.0],
            vec![2.0, 20.0],
            vec![3.0, 20.0],
            vec![4.0, 30.0],
        ]
    }

    pub(crate) fn random_rows(n: usize, p: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..p).map(|_| rng.random::<f64>()).collect())
            .collect()
    }

    #[test]
    fn split_probability() {
        let p = TreePriorParams::default();
        assert!((p_split(1, &p) - 0.2375).abs() < 1e-15);
        assert_eq!(p_split(0, &p), 0.95);
        let flat = TreePriorParams { alpha: 0.5, nu: 0.0 };
        assert!((0..6).all(|q| p_split(q, &flat) == 0.5));
    }

    #[test]
    fn degenerate_priors_give_root_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let one = vec![vec![0.3, 0.7]];
        let rows = random_rows(10, 3, 2);
        let never = TreePriorParams { alpha: 0.0, nu: 2.0 };
        for _ in 0..100 {
            assert_eq!(sample_tree_prior(&one, &TreePriorParams::default(), &mut rng).n_leaves(), 1);
            assert_eq!(sample_tree_prior(&rows, &never, &mut rng).n_leaves(), 1);
        }
    }

    #[test]
    fn available_splits_drop_the_maximum() {
        let rows = four_particles();
        let a = available_splits(&rows, &[0, 1, 2, 3]);
        assert_eq!(a.thresholds(0), Some(&[1.0, 2.0, 3.0][..]));
        assert_eq!(a.thresholds(1), Some(&[10.0, 20.0][..]));
        let b = available_splits(&rows, &[1, 2]);
        assert_eq!(b.n_vars(), 1);
        assert_eq!(b.thresholds(1), None);
    }

    #[test]
    fn log_prior_hand_values() {
        let params = TreePriorParams::default();
        let rows = four_particles();
        let root = Tree::root_only();
        assert!((log_tree_prior(&root, &rows, &params).unwrap() - 0.05f64.ln()).abs() < 1e-14);
        assert_eq!(log_tree_prior(&root, &rows[..1], &params).unwrap(), 0.0);

        let t = Tree::from_root(Node::split(SplitRule::new(0, 2.0), Node::leaf(), Node::leaf()));
        // root: 2 variables, 3 thresholds on x0; both leaves can still split
        let lp = log_tree_prior(&t, &rows, &params).unwrap();
        assert!((lp - (-2.385358304616746)).abs() < 1e-12, "{lp}");

        // right child {p1,p2} on x1 has one distinct value, on x0 it can still split
        let t2 = Tree::from_root(Node::split(SplitRule::new(1, 10.0), Node::leaf(), Node::leaf()));
        let lp2 = log_tree_prior(&t2, &rows, &params).unwrap();
        // left leaf {p0} cannot split: no term
        let expect = 0.95f64.ln() - 2f64.ln() - 2f64.ln() + (1.0 - 0.2375f64).ln();
        assert!((lp2 - expect).abs() < 1e-12);

        let bad = Tree::from_root(Node::split(SplitRule::new(0, 4.0), Node::leaf(), Node::leaf()));
        assert!(log_tree_prior(&bad, &rows, &params).is_err());
    }

    #[test]
    fn log_prior_is_exchangeable_in_particles() {
        let params = TreePriorParams::default();
        let rows = random_rows(12, 3, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut shuffled = rows.clone();
        shuffled.reverse();
        shuffled.swap(0, 5);
        for _ in 0..50 {
            let t = sample_tree_prior(&rows, &params, &mut rng);
            let a = log_tree_prior(&t, &rows, &params).unwrap();
            let b = log_tree_prior(&t, &shuffled, &params).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    /// Leaf-count histogram of prior draws on 24 particles x 6 covariates.
    /// Frozen from a 10^5-draw Monte Carlo run; P(1) and P(2) also have the
    /// closed forms 1 - alpha and
    /// alpha * (21/23 * (1 - p1)^2 + 2/23 * (1 - p1)) with p1 = alpha / 4.
    pub(crate) const PRIOR_LEAF_HISTOGRAM: [f64; 5] = [0.05, 0.5673, 0.2779, 0.0833, 0.0188];

    #[test]
    fn prior_leaf_count_histogram() {
        let params = TreePriorParams::default();
        let rows = random_rows(24, 6, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 100_000;
        let mut hist = [0usize; 8];
        for _ in 0..n {
            let k = sample_tree_prior(&rows, &params, &mut rng).n_leaves();
            hist[(k - 1).min(7)] += 1;
        }
        let freq: Vec<f64> = hist.iter().map(|&h| h as f64 / n as f64).collect();
        for (i, &p) in PRIOR_LEAF_HISTOGRAM.iter().enumerate() {
            assert!((freq[i] - p).abs() < 0.006, "leaves={} freq={} frozen={}", i + 1, freq[i], p);
        }
        // mass concentrates on small trees, mostly two or three leaves
        assert!(freq[1] + freq[2] > 0.8);
    }
}
