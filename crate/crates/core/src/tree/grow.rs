use serde::{Deserialize, Serialize};

use super::split::{thresholds, CandidateRule};
use super::stats::{leaf_stats, NodeMoments, Shifts};
use super::Tree;
use crate::criteria::{split_gain, CriterionSpec, Family, Mode};
use crate::data::CausalDataset;
use crate::error::{Error, Result};

/// Tree-growth controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowParams {
    /// Minimum number of treated and of control units in every leaf.
    pub n_min: usize,
    /// Target number of units per bucket when generating candidate splits.
    pub bucket_size: usize,
    pub max_depth: Option<usize>,
    /// Minimum total leaf size for transformed-outcome trees, which carry no
    /// per-arm restriction.
    pub tot_min_leaf: usize,
}

impl Default for GrowParams {
    fn default() -> Self {
        GrowParams { n_min: 25, bucket_size: 4, max_depth: None, tot_min_leaf: 50 }
    }
}

impl GrowParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_min < 2 {
            return Err(Error::Config(format!("n_min must be at least 2, got {}", self.n_min)));
        }
        if self.bucket_size < 1 {
            return Err(Error::Config("bucket size must be at least 1".into()));
        }
        if self.tot_min_leaf < 1 {
            return Err(Error::Config("TOT minimum leaf size must be at least 1".into()));
        }
        Ok(())
    }

    /// Candidate rule used by `spec`: bucketed per-arm splits for CT, F and
    /// TS; plain CART midpoints for TOT and for the prediction mode.
    pub fn rule_for(&self, spec: &CriterionSpec) -> CandidateRule {
        if spec.mode == Mode::Prediction {
            CandidateRule::AllValues { min_leaf: self.n_min }
        } else if spec.family == Family::TransformedOutcome {
            CandidateRule::AllValues { min_leaf: self.tot_min_leaf }
        } else {
            CandidateRule::Buckets { n_min: self.n_min, bucket_size: self.bucket_size }
        }
    }

    /// Whether a leaf with these statistics satisfies the minimum leaf size.
    pub fn leaf_ok(&self, spec: &CriterionSpec, n_treat: usize, n_control: usize) -> bool {
        match self.rule_for(spec) {
            CandidateRule::Buckets { n_min, .. } => n_treat >= n_min && n_control >= n_min,
            CandidateRule::AllValues { min_leaf } => n_treat + n_control >= min_leaf,
        }
    }
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Grows the deep, unpruned tree on `indices` by greedy depth-first splitting.
///
/// At every leaf each (feature, threshold) candidate is scored with the
/// criterion's split gain; the best strictly positive gain is taken, with ties
/// going to the lowest feature index and then the lowest threshold.
pub fn grow_tree(data: &CausalDataset, indices: &[usize], spec: &CriterionSpec, params: &GrowParams) -> Result<Tree> {
    params.validate()?;
    spec.validate()?;
    let root_stats = leaf_stats(data, indices, None);
    if !params.leaf_ok(spec, root_stats.n_treat(), root_stats.n_control()) {
        return Err(Error::Support(format!(
            "root has {} treated and {} control units, below the minimum leaf size",
            root_stats.n_treat(),
            root_stats.n_control()
        )));
    }
    let n = indices.len();
    let rule = params.rule_for(spec);
    let mut tree = Tree::single_leaf(root_stats);
    let mut stack = vec![(0usize, indices.to_vec())];
    let mut scratch = Vec::with_capacity(n);

    while let Some((id, idx)) = stack.pop() {
        if params.max_depth.is_some_and(|d| tree.node(id).depth >= d) {
            continue;
        }
        let Some(best) = best_split(data, &idx, spec, rule, n, &mut scratch) else {
            continue;
        };
        let col = data.column(best.feature);
        let (left, right): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| col[i] <= best.threshold);
        let ls = leaf_stats(data, &left, None);
        let rs = leaf_stats(data, &right, None);
        let (l, r) = tree.split_leaf(id, best.feature, best.threshold, ls, rs)?;
        stack.push((r, right));
        stack.push((l, left));
    }
    Ok(tree.compact(|_| false))
}

fn best_split(
    data: &CausalDataset,
    idx: &[usize],
    spec: &CriterionSpec,
    rule: CandidateRule,
    n: usize,
    order: &mut Vec<usize>,
) -> Option<BestSplit> {
    let rough = NodeMoments::collect(data, idx, Shifts::default()).stats(Shifts::default());
    let shifts = Shifts { y: rough.all.mean.unwrap_or(0.0), star: rough.transformed.mean.unwrap_or(0.0) };
    let total = NodeMoments::collect(data, idx, shifts);
    let parent = total.stats(shifts);

    let mut best: Option<BestSplit> = None;
    let mut treat_x = Vec::with_capacity(idx.len());
    let mut control_x = Vec::with_capacity(idx.len());
    let mut all_x = Vec::with_capacity(idx.len());
    for feature in 0..data.n_features() {
        let col = data.column(feature);
        order.clear();
        order.extend_from_slice(idx);
        order.sort_unstable_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
        treat_x.clear();
        control_x.clear();
        all_x.clear();
        for &i in order.iter() {
            let v = col[i];
            all_x.push(v);
            if data.is_treated(i) {
                treat_x.push(v);
            } else {
                control_x.push(v);
            }
        }
        let candidates = thresholds(&treat_x, &control_x, &all_x, rule);
        if candidates.is_empty() {
            continue;
        }
        let mut left = NodeMoments::default();
        let mut pos = 0;
        for &t in &candidates {
            while pos < order.len() && col[order[pos]] <= t {
                left.push(data, order[pos], shifts);
                pos += 1;
            }
            let right = total.minus(left);
            let Ok(gain) = split_gain(spec, &parent, &left.stats(shifts), &right.stats(shifts), n) else {
                continue;
            };
            if gain > best.as_ref().map_or(0.0, |b| b.gain) {
                best = Some(BestSplit { gain, feature, threshold: t });
            }
        }
    }
    best
}
