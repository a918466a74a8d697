//! Binary partitions of covariate space and their greedy construction.

mod grow;
mod split;
mod stats;

pub use grow::{grow_tree, GrowParams};
pub use split::{candidate_splits, CandidateRule};
pub use stats::{leaf_stats, ArmStats, LeafStats};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::CausalDataset;
use crate::error::{Error, Result};

/// Axis-aligned split: `x[feature] <= threshold` goes to `left`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    /// Present for internal nodes only.
    pub split: Option<Split>,
    /// Statistics of the sample the tree was built on, for every node.
    pub stats: LeafStats,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }
}

/// Binary tree stored as an arena; node ids are positions in preorder and
/// the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

/// Lower (exclusive) and upper (inclusive) bound on one feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub feature: usize,
    pub lower: f64,
    pub upper: f64,
}

impl Tree {
    pub fn single_leaf(stats: LeafStats) -> Tree {
        Tree { nodes: vec![Node { id: 0, parent: None, depth: 0, split: None, stats }] }
    }

    /// Turns leaf `id` into an internal node with two new leaf children.
    ///
    /// Node ids are only guaranteed to be in preorder after [`Tree::compact`];
    /// the growth routine calls it once at the end.
    pub fn split_leaf(
        &mut self,
        id: usize,
        feature: usize,
        threshold: f64,
        left: LeafStats,
        right: LeafStats,
    ) -> Result<(usize, usize)> {
        let node = self.nodes.get(id).ok_or_else(|| Error::Validation(format!("no node {id}")))?;
        if !node.is_leaf() {
            return Err(Error::Validation(format!("node {id} is already split")));
        }
        let depth = node.depth + 1;
        let l = self.nodes.len();
        let r = l + 1;
        self.nodes.push(Node { id: l, parent: Some(id), depth, split: None, stats: left });
        self.nodes.push(Node { id: r, parent: Some(id), depth, split: None, stats: right });
        self.nodes[id].split = Some(Split { feature, threshold, left: l, right: r });
        Ok((l, r))
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaves(&self) -> Vec<usize> {
        self.nodes.iter().filter(|n| n.is_leaf()).map(|n| n.id).collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn n_features_used(&self) -> usize {
        self.nodes.iter().filter_map(|n| n.split.map(|s| s.feature + 1)).max().unwrap_or(0)
    }

    /// Leaf reached by covariate vector `x`.
    pub fn apply(&self, x: &[f64]) -> usize {
        self.descend(|f| x[f])
    }

    /// Leaf reached by row `i` of `data`.
    pub fn apply_row(&self, data: &CausalDataset, i: usize) -> usize {
        self.descend(|f| data.x(i, f))
    }

    fn descend(&self, value: impl Fn(usize) -> f64) -> usize {
        let mut id = 0;
        while let Some(s) = self.nodes[id].split {
            id = if value(s.feature) <= s.threshold { s.left } else { s.right };
        }
        id
    }

    /// Ancestors of `id`, nearest first, ending at the root.
    pub fn ancestors(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.nodes[id].parent;
        while let Some(p) = cur {
            out.push(p);
            cur = self.nodes[p].parent;
        }
        out
    }

    /// Units of `indices` grouped by the leaf they reach.
    pub fn partition(&self, data: &CausalDataset, indices: &[usize]) -> BTreeMap<usize, Vec<usize>> {
        let mut out: BTreeMap<usize, Vec<usize>> = self.leaves().into_iter().map(|l| (l, Vec::new())).collect();
        for &i in indices {
            out.entry(self.apply_row(data, i)).or_default().push(i);
        }
        out
    }

    /// Units of `indices` passing through each node (indexed by node id).
    pub fn route_all(&self, data: &CausalDataset, indices: &[usize]) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for &i in indices {
            let mut id = 0;
            loop {
                out[id].push(i);
                match self.nodes[id].split {
                    Some(s) => id = if data.x(i, s.feature) <= s.threshold { s.left } else { s.right },
                    None => break,
                }
            }
        }
        out
    }

    /// Same structure with every node's statistics recomputed on `indices`.
    pub fn refit(&self, data: &CausalDataset, indices: &[usize]) -> Tree {
        let routed = self.route_all(data, indices);
        let mut t = self.clone();
        for (node, idx) in t.nodes.iter_mut().zip(&routed) {
            node.stats = leaf_stats(data, idx, None);
        }
        t
    }

    /// Copy in which every node for which `collapse` holds becomes a leaf;
    /// ids are reassigned in preorder.
    pub fn compact(&self, collapse: impl Fn(usize) -> bool) -> Tree {
        let mut out = Vec::with_capacity(self.nodes.len());
        self.copy_into(0, None, 0, &collapse, &mut out);
        Tree { nodes: out }
    }

    fn copy_into(
        &self,
        old: usize,
        parent: Option<usize>,
        depth: usize,
        collapse: &impl Fn(usize) -> bool,
        out: &mut Vec<Node>,
    ) -> usize {
        let id = out.len();
        let src = &self.nodes[old];
        out.push(Node { id, parent, depth, split: None, stats: src.stats });
        if let Some(s) = src.split {
            if !collapse(old) {
                let left = self.copy_into(s.left, Some(id), depth + 1, collapse, out);
                let right = self.copy_into(s.right, Some(id), depth + 1, collapse, out);
                out[id].split = Some(Split { left, right, ..s });
            }
        }
        id
    }

    /// Bounds on each constrained feature for the region of node `id`.
    pub fn region(&self, id: usize) -> Vec<Bound> {
        let mut bounds: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
        let mut child = id;
        for anc in self.ancestors(id) {
            let s = self.nodes[anc].split.expect("ancestor is internal");
            let e = bounds.entry(s.feature).or_insert((f64::NEG_INFINITY, f64::INFINITY));
            if s.left == child {
                e.1 = e.1.min(s.threshold);
            } else {
                e.0 = e.0.max(s.threshold);
            }
            child = anc;
        }
        bounds.into_iter().map(|(feature, (lower, upper))| Bound { feature, lower, upper }).collect()
    }

    /// Human-readable region, e.g. `-0.3 < x2 <= 1.5 & x1 > 0`.
    pub fn region_description(&self, id: usize, names: &[String]) -> String {
        let parts: Vec<String> = self
            .region(id)
            .into_iter()
            .map(|b| {
                let name = feature_name(names, b.feature);
                match (b.lower.is_finite(), b.upper.is_finite()) {
                    (true, true) => format!("{} < {name} <= {}", fmt_num(b.lower), fmt_num(b.upper)),
                    (true, false) => format!("{name} > {}", fmt_num(b.lower)),
                    (false, true) => format!("{name} <= {}", fmt_num(b.upper)),
                    (false, false) => name,
                }
            })
            .collect();
        if parts.is_empty() {
            "all".to_string()
        } else {
            parts.join(" & ")
        }
    }

    /// Indented text rendering of the tree.
    pub fn to_text(&self, names: &[String]) -> String {
        let mut out = String::new();
        self.write_node(&mut out, 0, names, "root");
        out
    }

    fn write_node(&self, out: &mut String, id: usize, names: &[String], label: &str) {
        let node = &self.nodes[id];
        let s = &node.stats;
        let tau = match (s.mean_treat(), s.mean_control()) {
            (Some(t), Some(c)) => fmt_num(t - c),
            _ => "NA".to_string(),
        };
        let indent = "  ".repeat(node.depth);
        let _ = writeln!(
            out,
            "{indent}{id}) {label} n={} (treated {}, control {}) tau={tau}{}",
            s.n(),
            s.n_treat(),
            s.n_control(),
            if node.is_leaf() { " *" } else { "" }
        );
        if let Some(sp) = node.split {
            let name = feature_name(names, sp.feature);
            let thr = fmt_num(sp.threshold);
            self.write_node(out, sp.left, names, &format!("{name} <= {thr}"));
            self.write_node(out, sp.right, names, &format!("{name} > {thr}"));
        }
    }

    /// Checks the structural invariants: single root, consistent parent links
    /// and every non-root node owned by exactly one split.
    pub fn check(&self) -> Result<()> {
        let mut owners = vec![0usize; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return Err(Error::Validation(format!("node {i} carries id {}", n.id)));
            }
            if let Some(s) = n.split {
                for c in [s.left, s.right] {
                    if c >= self.nodes.len() || self.nodes[c].parent != Some(i) {
                        return Err(Error::Validation(format!("bad child link {i} -> {c}")));
                    }
                    owners[c] += 1;
                }
            }
        }
        if self.nodes[0].parent.is_some() || owners[0] != 0 {
            return Err(Error::Validation("root has a parent".into()));
        }
        if owners.iter().skip(1).any(|&o| o != 1) {
            return Err(Error::Validation("node without exactly one parent".into()));
        }
        Ok(())
    }
}

fn feature_name(names: &[String], k: usize) -> String {
    names.get(k).cloned().unwrap_or_else(|| format!("x{}", k + 1))
}

pub(crate) fn fmt_num(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}
