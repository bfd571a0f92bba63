//! Binary regression trees over particle covariates.
//!
//! Splits use rules `x[var] <= threshold` (left) versus `> threshold`
//! (right) and only ever involve covariates, so all observations of a
//! particle land in the same leaf. Nodes are addressed by their path from
//! the root (`false` = left, `true` = right); leaves are numbered in
//! preorder.

mod moves;
mod prior;
mod text;

pub use moves::{propose_move, MoveKind, MoveProbs, Proposal};
pub use prior::{
    available_splits, log_tree_prior, p_split, sample_tree_prior, AvailableSplits,
    TreePriorParams,
};

use crate::error::{Error, Result};

/// Path from the root to a node.
pub type NodePath = Vec<bool>;

#[derive(Debug, Clone, PartialEq)]
pub struct SplitRule {
    pub var: usize,
    pub threshold: f64,
}

impl SplitRule {
    pub fn new(var: usize, threshold: f64) -> Self {
        Self { var, threshold }
    }

    #[inline]
    pub fn goes_left(&self, x: &[f64]) -> bool {
        x[self.var] <= self.threshold
    }
}

/// Terminal node. Coefficients are unset right after a structural move
/// until the sampler draws them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Leaf {
    pub coeffs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf(Leaf),
    Internal {
        rule: SplitRule,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    pub fn leaf() -> Self {
        Node::Leaf(Leaf::default())
    }

    pub fn split(rule: SplitRule, left: Node, right: Node) -> Self {
        Node::Internal {
            rule,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf(_))
    }

    pub fn rule(&self) -> Option<&SplitRule> {
        match self {
            Node::Internal { rule, .. } => Some(rule),
            Node::Leaf(_) => None,
        }
    }

    fn child(&self, right: bool) -> Option<&Node> {
        match self {
            Node::Internal { left, right: r, .. } => Some(if right { r } else { left }),
            Node::Leaf(_) => None,
        }
    }

    fn child_mut(&mut self, right: bool) -> Option<&mut Node> {
        match self {
            Node::Internal { left, right: r, .. } => Some(if right { r } else { left }),
            Node::Leaf(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    root: Node,
}

impl Default for Tree {
    fn default() -> Self {
        Self::root_only()
    }
}

impl Tree {
    pub fn root_only() -> Self {
        Self { root: Node::leaf() }
    }

    pub fn from_root(root: Node) -> Self {
        Self { root }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn node(&self, path: &[bool]) -> Option<&Node> {
        path.iter().try_fold(&self.root, |n, &dir| n.child(dir))
    }

    pub fn node_mut(&mut self, path: &[bool]) -> Option<&mut Node> {
        let mut n = &mut self.root;
        for &dir in path {
            n = n.child_mut(dir)?;
        }
        Some(n)
    }

    fn visit<'a>(&'a self, f: &mut impl FnMut(&[bool], &'a Node)) {
        fn go<'a>(n: &'a Node, path: &mut NodePath, f: &mut impl FnMut(&[bool], &'a Node)) {
            f(path, n);
            if let Node::Internal { left, right, .. } = n {
                path.push(false);
                go(left, path, f);
                path.pop();
                path.push(true);
                go(right, path, f);
                path.pop();
            }
        }
        go(&self.root, &mut Vec::new(), f);
    }

    /// Paths of all leaves, in preorder.
    pub fn leaf_paths(&self) -> Vec<NodePath> {
        let mut out = Vec::new();
        self.visit(&mut |p, n| {
            if n.is_leaf() {
                out.push(p.to_vec());
            }
        });
        out
    }

    /// Paths of all internal nodes, in preorder.
    pub fn internal_paths(&self) -> Vec<NodePath> {
        let mut out = Vec::new();
        self.visit(&mut |p, n| {
            if !n.is_leaf() {
                out.push(p.to_vec());
            }
        });
        out
    }

    /// Internal nodes whose two children are both leaves.
    pub fn prunable_paths(&self) -> Vec<NodePath> {
        let mut out = Vec::new();
        self.visit(&mut |p, n| {
            if let Node::Internal { left, right, .. } = n {
                if left.is_leaf() && right.is_leaf() {
                    out.push(p.to_vec());
                }
            }
        });
        out
    }

    pub fn n_leaves(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, node| n += node.is_leaf() as usize);
        n
    }

    pub fn max_depth(&self) -> usize {
        let mut d = 0;
        self.visit(&mut |p, _| d = d.max(p.len()));
        d
    }

    pub fn leaves(&self) -> Vec<&Leaf> {
        let mut out = Vec::new();
        self.visit(&mut |_, n| {
            if let Node::Leaf(l) = n {
                out.push(l);
            }
        });
        out
    }

    pub fn leaves_mut(&mut self) -> Vec<&mut Leaf> {
        fn go<'a>(n: &'a mut Node, out: &mut Vec<&'a mut Leaf>) {
            match n {
                Node::Leaf(l) => out.push(l),
                Node::Internal { left, right, .. } => {
                    go(left, out);
                    go(right, out);
                }
            }
        }
        let mut out = Vec::new();
        go(&mut self.root, &mut out);
        out
    }

    /// Variables used by at least one split.
    pub fn split_vars(&self) -> Vec<usize> {
        let mut vars = Vec::new();
        self.visit(&mut |_, n| {
            if let Some(r) = n.rule() {
                if !vars.contains(&r.var) {
                    vars.push(r.var);
                }
            }
        });
        vars.sort_unstable();
        vars
    }

    pub fn splits_on(&self, var: usize) -> bool {
        self.split_vars().contains(&var)
    }

    /// Preorder index of the leaf that `x` is routed to.
    pub fn assign_leaf(&self, x: &[f64]) -> usize {
        // count the leaves skipped while descending
        fn leaves_below(n: &Node) -> usize {
            match n {
                Node::Leaf(_) => 1,
                Node::Internal { left, right, .. } => leaves_below(left) + leaves_below(right),
            }
        }
        let mut idx = 0;
        let mut n = &self.root;
        while let Node::Internal { rule, left, right } = n {
            if rule.goes_left(x) {
                n = left;
            } else {
                idx += leaves_below(left);
                n = right;
            }
        }
        idx
    }

    /// The leaf `x` is routed to.
    pub fn leaf_for(&self, x: &[f64]) -> &Leaf {
        let mut n = &self.root;
        loop {
            match n {
                Node::Leaf(l) => return l,
                Node::Internal { rule, left, right } => {
                    n = if rule.goes_left(x) { left } else { right };
                }
            }
        }
    }

    /// Particle indices of `rows` falling in each leaf, leaves in preorder.
    pub fn partition(&self, rows: &[Vec<f64>]) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_leaves()];
        for (i, x) in rows.iter().enumerate() {
            out[self.assign_leaf(x)].push(i);
        }
        out
    }

    /// Particle indices of `rows` reaching the node at `path`.
    pub fn particles_at(&self, path: &[bool], rows: &[Vec<f64>]) -> Vec<usize> {
        (0..rows.len())
            .filter(|&i| {
                let mut n = &self.root;
                for &dir in path {
                    let Node::Internal { rule, left, right } = n else {
                        return false;
                    };
                    if rule.goes_left(&rows[i]) == dir {
                        return false;
                    }
                    n = if dir { right } else { left };
                }
                true
            })
            .collect()
    }

    /// True when every leaf receives at least one particle.
    pub fn is_valid_on(&self, rows: &[Vec<f64>]) -> bool {
        self.partition(rows).iter().all(|p| !p.is_empty())
    }

    pub fn validate_on(&self, rows: &[Vec<f64>]) -> Result<()> {
        if self.is_valid_on(rows) {
            Ok(())
        } else {
            Err(Error::invalid("tree has a leaf with no particles"))
        }
    }

    /// Copy of the tree with all leaf coefficients cleared.
    pub fn structure(&self) -> Tree {
        let mut t = self.clone();
        for l in t.leaves_mut() {
            l.coeffs = None;
        }
        t
    }

    /// Leaf coefficient vectors in preorder; `None` if any is unset.
    pub fn leaf_coeffs(&self) -> Option<Vec<&[f64]>> {
        self.leaves()
            .into_iter()
            .map(|l| l.coeffs.as_deref())
            .collect()
    }

    /// Replace leaf coefficients, leaves in preorder.
    pub fn set_leaf_coeffs(&mut self, coeffs: Vec<Vec<f64>>) -> Result<()> {
        let mut leaves = self.leaves_mut();
        if leaves.len() != coeffs.len() {
            return Err(Error::invalid(format!(
                "{} coefficient vectors for {} leaves",
                coeffs.len(),
                leaves.len()
            )));
        }
        for (l, c) in leaves.iter_mut().zip(coeffs) {
            l.coeffs = Some(c);
        }
        Ok(())
    }
}
