//! Nested text form of a tree.
//!
//! ```text
//! (split 3 0.42 (leaf) (split 0 1.5 (leaf 0.1 0.2) (leaf -0.3 0.4)))
//! ```
//!
//! Internal nodes are `(split <var> <threshold> <left> <right>)`; leaves
//! are `(leaf)` or `(leaf <c1> <c2> ...)`. Numbers are written in
//! shortest round-trip form, so parsing the text of a tree gives back the
//! identical tree.

use std::fmt;
use std::str::FromStr;

use super::{Leaf, Node, SplitRule, Tree};
use crate::error::{Error, Result};

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(n: &Node, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match n {
                Node::Leaf(Leaf { coeffs }) => {
                    write!(f, "(leaf")?;
                    for c in coeffs.iter().flatten() {
                        write!(f, " {c:?}")?;
                    }
                    write!(f, ")")
                }
                Node::Internal { rule, left, right } => {
                    write!(f, "(split {} {:?} ", rule.var, rule.threshold)?;
                    go(left, f)?;
                    write!(f, " ")?;
                    go(right, f)?;
                    write!(f, ")")
                }
            }
        }
        go(&self.root, f)
    }
}

fn tokens(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' | ')' => {
                if let Some(st) = start.take() {
                    out.push(&s[st..i]);
                }
                out.push(&s[i..i + 1]);
            }
            c if c.is_whitespace() => {
                if let Some(st) = start.take() {
                    out.push(&s[st..i]);
                }
            }
            _ => {
                start.get_or_insert(i);
            }
        }
    }
    if let Some(st) = start {
        out.push(&s[st..]);
    }
    out
}

struct Parser<'a> {
    toks: Vec<&'a str>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn next(&mut self) -> Result<&'a str> {
        let t = self
            .toks
            .get(self.pos)
            .copied()
            .ok_or_else(|| Error::invalid("tree text ends early"))?;
        self.pos += 1;
        Ok(t)
    }

    fn peek(&self) -> Option<&'a str> {
        self.toks.get(self.pos).copied()
    }

    fn expect(&mut self, want: &str) -> Result<()> {
        let got = self.next()?;
        if got != want {
            return Err(Error::invalid(format!("tree text: expected '{want}', found '{got}'")));
        }
        Ok(())
    }

    fn number<T: FromStr>(&mut self) -> Result<T> {
        let t = self.next()?;
        t.parse()
            .map_err(|_| Error::invalid(format!("tree text: bad number '{t}'")))
    }

    fn node(&mut self) -> Result<Node> {
        self.expect("(")?;
        match self.next()? {
            "leaf" => {
                let mut coeffs = Vec::new();
                while self.peek() != Some(")") {
                    coeffs.push(self.number::<f64>()?);
                }
                self.expect(")")?;
                Ok(Node::Leaf(Leaf {
                    coeffs: (!coeffs.is_empty()).then_some(coeffs),
                }))
            }
            "split" => {
                let var = self.number::<usize>()?;
                let threshold = self.number::<f64>()?;
                let left = self.node()?;
                let right = self.node()?;
                self.expect(")")?;
                Ok(Node::split(SplitRule::new(var, threshold), left, right))
            }
            other => Err(Error::invalid(format!("tree text: unknown node kind '{other}'"))),
        }
    }
}

impl FromStr for Tree {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut p = Parser {
            toks: tokens(s),
            pos: 0,
        };
        let root = p.node()?;
        if let Some(t) = p.peek() {
            return Err(Error::invalid(format!("tree text: trailing token '{t}'")));
        }
        Ok(Tree::from_root(root))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_and_prints() {
        let text = "(split 3 0.42 (leaf) (split 0 1.5 (leaf 0.1 0.2) (leaf -0.3 1e-7)))";
        let t: Tree = text.parse().unwrap();
        assert_eq!(t.n_leaves(), 3);
        assert_eq!(t.to_string(), text);
        assert!("(split 1 (leaf) (leaf))".parse::<Tree>().is_err());
        assert!("(leaf) (leaf)".parse::<Tree>().is_err());
        assert!("(bush)".parse::<Tree>().is_err());
    }

    fn arb_node() -> impl Strategy<Value = Node> {
        let leaf = proptest::option::of(proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..4))
            .prop_map(|coeffs| Node::Leaf(Leaf { coeffs }));
        leaf.prop_recursive(4, 16, 2, |inner| {
            (0usize..6, -1e3f64..1e3, inner.clone(), inner)
                .prop_map(|(v, t, l, r)| Node::split(SplitRule::new(v, t), l, r))
        })
    }

    proptest! {
        #[test]
        fn text_round_trip(root in arb_node()) {
            let t = Tree::from_root(root);
            let back: Tree = t.to_string().parse().unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
