//! Cost-complexity pruning and cross-validated choice of the leaf penalty.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::criteria::{cv_value, node_term, CriterionSpec, Family};
use crate::data::CausalDataset;
use crate::error::{Error, Result};
use crate::tree::{grow_tree, GrowParams, Tree};

/// Nested pruned subtrees indexed by the penalty at which each becomes optimal.
///
/// Entry `i` is the optimal subtree for every `alpha` in
/// `[entries[i].0, entries[i+1].0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneSequence {
    pub entries: Vec<(f64, Tree)>,
}

impl PruneSequence {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.0).collect()
    }

    /// Index of the entry whose interval contains `alpha`.
    pub fn index_for(&self, alpha: f64) -> usize {
        self.entries.partition_point(|e| e.0 <= alpha).saturating_sub(1)
    }

    pub fn tree_at(&self, alpha: f64) -> &Tree {
        &self.entries[self.index_for(alpha)].1
    }
}

/// Cross-validation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
}

impl CvConfig {
    /// Five folds, or ten for transformed-outcome trees.
    pub fn for_spec(spec: &CriterionSpec, seed: u64) -> CvConfig {
        let folds = if spec.family == Family::TransformedOutcome { 10 } else { 5 };
        CvConfig { folds, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config(format!("need at least 2 folds, got {}", self.folds)));
        }
        Ok(())
    }
}

/// Per-node criterion values and the pruning state of the original tree.
struct Pruner<'a> {
    tree: &'a Tree,
    value: Vec<f64>,
    collapsed: Vec<bool>,
}

impl Pruner<'_> {
    /// (sum of leaf values, leaf count) of the current subtree at `id`.
    fn subtree(&self, id: usize) -> (f64, usize) {
        match self.tree.node(id).split {
            Some(s) if !self.collapsed[id] => {
                let (a, la) = self.subtree(s.left);
                let (b, lb) = self.subtree(s.right);
                (a + b, la + lb)
            }
            _ => (self.value[id], 1),
        }
    }

    /// Collapses every node whose subtree does not beat it at zero penalty;
    /// returns the subtree value.
    fn optimal_at_zero(&mut self, id: usize) -> f64 {
        match self.tree.node(id).split {
            Some(s) if !self.collapsed[id] => {
                let sub = self.optimal_at_zero(s.left) + self.optimal_at_zero(s.right);
                if sub > self.value[id] {
                    sub
                } else {
                    self.collapsed[id] = true;
                    self.value[id]
                }
            }
            _ => self.value[id],
        }
    }

    /// Weakest-link values `(node, g)` of the current internal nodes.
    fn links(&self, id: usize, out: &mut Vec<(usize, f64)>) {
        if let Some(s) = self.tree.node(id).split {
            if !self.collapsed[id] {
                let (sum, leaves) = self.subtree(id);
                out.push((id, (sum - self.value[id]) / (leaves - 1) as f64));
                self.links(s.left, out);
                self.links(s.right, out);
            }
        }
    }

    fn current(&self) -> Tree {
        self.tree.compact(|id| self.collapsed[id])
    }
}

/// Weakest-link pruning sequence of `tree` under the pruning criterion of `spec`.
///
/// Node values use the statistics stored in the tree, normalised by the root
/// sample size. The first entry (alpha 0) is the smallest subtree maximising
/// the unpenalised value, which is the full tree whenever every split
/// improved that value; the last entry is the root.
pub fn cost_complexity_sequence(tree: &Tree, spec: &CriterionSpec) -> Result<PruneSequence> {
    let spec = spec.pruning_spec();
    let n = tree.node(0).stats.n();
    let value = tree.nodes().iter().map(|node| node_term(&spec, &node.stats, n)).collect::<Result<Vec<_>>>()?;
    let mut p = Pruner { tree, value, collapsed: vec![false; tree.len()] };
    p.optimal_at_zero(0);
    let mut entries = vec![(0.0, p.current())];
    loop {
        let mut links = Vec::new();
        p.links(0, &mut links);
        let Some(g) = links.iter().map(|l| l.1).min_by(f64::total_cmp) else {
            break;
        };
        let tol = 1e-12 * g.abs().max(1e-300);
        for &(id, gi) in &links {
            if gi <= g + tol {
                p.collapsed[id] = true;
            }
        }
        let alpha = g.max(0.0);
        let last = entries.last_mut().expect("non-empty");
        if alpha <= last.0 {
            // Numerically coincides with the previous breakpoint.
            last.1 = p.current();
        } else {
            entries.push((alpha, p.current()));
        }
    }
    Ok(PruneSequence { entries })
}

/// Optimal pruned subtree of `tree` at penalty `alpha` per leaf.
pub fn prune(tree: &Tree, spec: &CriterionSpec, alpha: f64) -> Result<Tree> {
    if alpha.is_nan() || alpha < 0.0 {
        return Err(Error::Validation(format!("penalty must be non-negative, got {alpha}")));
    }
    Ok(cost_complexity_sequence(tree, spec)?.tree_at(alpha).clone())
}

/// Random fold labels for `indices`, stratified by arm so every fold holds
/// units of both arms whenever each arm has at least `folds` units.
pub fn assign_folds(data: &CausalDataset, indices: &[usize], cv: &CvConfig) -> Result<Vec<Vec<usize>>> {
    cv.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cv.seed);
    let mut treat: Vec<usize> = indices.iter().copied().filter(|&i| data.is_treated(i)).collect();
    let mut control: Vec<usize> = indices.iter().copied().filter(|&i| !data.is_treated(i)).collect();
    if treat.len() < cv.folds || control.len() < cv.folds {
        return Err(Error::Support(format!(
            "{} folds need at least {} units per arm, have {} treated and {} control",
            cv.folds,
            cv.folds,
            treat.len(),
            control.len()
        )));
    }
    treat.shuffle(&mut rng);
    control.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); cv.folds];
    for (k, &i) in treat.iter().chain(&control).enumerate() {
        folds[k % cv.folds].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Candidate penalties representing every subtree of `seq`: zero, the
/// geometric means of adjacent positive breakpoints, and infinity for the root.
fn grid_points(seq: &PruneSequence) -> Vec<f64> {
    let a = seq.alphas();
    let mut out = vec![0.0];
    for w in a.windows(2).skip(1) {
        out.push((w[0] * w[1]).sqrt());
    }
    if a.len() > 1 {
        out.push(f64::INFINITY);
    }
    out
}

/// Cross-validation curve: candidate penalties in ascending order with the
/// fold-averaged cv value of each.
pub fn cv_curve(
    data: &CausalDataset,
    train: &[usize],
    spec: &CriterionSpec,
    params: &GrowParams,
    cv: &CvConfig,
) -> Result<Vec<(f64, f64)>> {
    let folds = assign_folds(data, train, cv)?;
    let mut per_fold = Vec::with_capacity(folds.len());
    for (k, held) in folds.iter().enumerate() {
        let fit: Vec<usize> =
            folds.iter().enumerate().filter(|&(j, _)| j != k).flat_map(|(_, f)| f.iter().copied()).collect();
        let mut fit = fit;
        fit.sort_unstable();
        let tree = grow_tree(data, &fit, spec, params)?;
        let seq = cost_complexity_sequence(&tree, spec)?;
        let values = seq.entries.iter().map(|(_, t)| cv_value(spec, t, data, held)).collect::<Result<Vec<_>>>()?;
        per_fold.push((seq, values));
    }
    let mut grid: Vec<f64> = per_fold.iter().flat_map(|(s, _)| grid_points(s)).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let k = per_fold.len() as f64;
    Ok(grid
        .into_iter()
        .map(|a| {
            let mean = per_fold.iter().map(|(s, v)| v[s.index_for(a)]).sum::<f64>() / k;
            (a, mean)
        })
        .collect())
}

/// Penalty maximising the fold-averaged cv value; ties go to the larger penalty.
pub fn select_alpha(
    data: &CausalDataset,
    train: &[usize],
    spec: &CriterionSpec,
    params: &GrowParams,
    cv: &CvConfig,
) -> Result<f64> {
    let curve = cv_curve(data, train, spec, params, cv)?;
    let mut best = (0.0, f64::NEG_INFINITY);
    for &(a, v) in &curve {
        if v >= best.1 - 1e-12 * best.1.abs() {
            best = (a, v);
        }
    }
    Ok(best.0)
}

/// A grown, cross-validated and pruned tree.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedTree {
    pub tree: Tree,
    pub alpha: f64,
    pub full_leaves: usize,
}

/// Grows on `train`, selects the penalty by cross-validation on `train` and
/// prunes the full tree at that penalty.
pub fn fit_pruned(
    data: &CausalDataset,
    train: &[usize],
    spec: &CriterionSpec,
    params: &GrowParams,
    cv: &CvConfig,
) -> Result<FittedTree> {
    let full = grow_tree(data, train, spec, params)?;
    let alpha = select_alpha(data, train, spec, params, cv)?;
    let tree = cost_complexity_sequence(&full, spec)?.tree_at(alpha).clone();
    Ok(FittedTree { full_leaves: full.n_leaves(), tree, alpha })
}
