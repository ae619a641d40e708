//! Epigraph of `γ^order / p^(order−1)` with rotated cones only.
//!
//! With `N` the next power of two, `|γ|^order ≤ e·p^(order−1)` is rewritten as
//! `s ≤ (e · p^(order−1) · s^(N−order))^(1/N)` for `s ≥ |γ|` and expanded into
//! a binary tree of two-term geometric means `w ≤ √(x·y)`. Pairs of identical
//! leaves collapse without a cone, so power-of-two orders reduce to the
//! familiar tower `t₁ ≥ γ²/p, t₂ ≥ t₁²/p, …` with `log₂(order)` cones.

use super::block::{ConeGroup, ConicBlock, LinExpr, Local};
use crate::cones::Cone;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Leaf {
    Value,
    Scale,
    Abs,
    Node(usize),
}

pub(super) struct PowerTree {
    needs_abs: bool,
    nodes: Vec<(Leaf, Leaf)>,
    root: (Leaf, Leaf),
}

impl PowerTree {
    pub(super) fn new(order: u32) -> Self {
        let order = order.max(2) as usize;
        let n = order.next_power_of_two();
        let mut level = vec![Leaf::Value];
        level.extend(std::iter::repeat_n(Leaf::Scale, order - 1));
        level.extend(std::iter::repeat_n(Leaf::Abs, n - order));
        let mut nodes = Vec::new();
        while level.len() > 2 {
            level = level
                .chunks(2)
                .map(|pair| {
                    let (a, b) = (pair[0], pair[1]);
                    if a == b && matches!(a, Leaf::Scale | Leaf::Abs) {
                        a
                    } else {
                        nodes.push((a, b));
                        Leaf::Node(nodes.len() - 1)
                    }
                })
                .collect();
        }
        PowerTree {
            needs_abs: n > order,
            nodes,
            root: (level[0], level[1]),
        }
    }

    fn aux_offset(&self) -> usize {
        usize::from(self.needs_abs)
    }

    fn local(&self, leaf: Leaf) -> Local {
        match leaf {
            Leaf::Value => Local::Value,
            Leaf::Scale => Local::Scale,
            Leaf::Abs => Local::Aux(0),
            Leaf::Node(i) => Local::Aux(self.aux_offset() + i),
        }
    }

    /// `x·y ≥ w²` as `2·(x/2)·y ≥ w²`.
    fn mean_cone(&self, x: Leaf, y: Leaf, tail: Local) -> ConeGroup {
        ConeGroup::new(
            Cone::Rsoc,
            vec![
                LinExpr::term(self.local(x), 0.5),
                LinExpr::term(self.local(y), 1.0),
                LinExpr::term(tail, 1.0),
            ],
        )
    }

    pub(super) fn block(&self, index: usize) -> ConicBlock {
        let mut groups = Vec::new();
        if self.needs_abs {
            groups.push(ConeGroup::new(
                Cone::Nonneg,
                vec![
                    LinExpr::term(Local::Aux(0), 1.0).with(Local::Arg(index), -1.0),
                    LinExpr::term(Local::Aux(0), 1.0).with(Local::Arg(index), 1.0),
                ],
            ));
        }
        for (i, &(x, y)) in self.nodes.iter().enumerate() {
            groups.push(self.mean_cone(x, y, self.local(Leaf::Node(i))));
        }
        let tail = if self.needs_abs {
            Local::Aux(0)
        } else {
            Local::Arg(index)
        };
        groups.push(self.mean_cone(self.root.0, self.root.1, tail));
        ConicBlock::new(self.aux_offset() + self.nodes.len(), groups)
    }

    /// Tight auxiliaries for `(γ, p, e)`.
    pub(super) fn witness(&self, gamma: f64, scale: f64, value: f64) -> Vec<f64> {
        let s = gamma.abs();
        let mut aux = Vec::with_capacity(self.aux_offset() + self.nodes.len());
        if self.needs_abs {
            aux.push(s);
        }
        let mut node_vals: Vec<f64> = Vec::with_capacity(self.nodes.len());
        let leaf_val = |leaf: Leaf, nodes: &[f64]| match leaf {
            Leaf::Value => value.max(0.0),
            Leaf::Scale => scale.max(0.0),
            Leaf::Abs => s,
            Leaf::Node(i) => nodes[i],
        };
        for &(x, y) in &self.nodes {
            let v = (leaf_val(x, &node_vals) * leaf_val(y, &node_vals)).sqrt();
            node_vals.push(v);
        }
        aux.extend(node_vals);
        aux
    }
}
