use crate::data::CausalDataset;

/// How candidate thresholds are generated within a leaf.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateRule {
    /// Treated and control units are bucketed separately so that moving to
    /// the next candidate moves units of both arms; every child keeps at
    /// least `n_min` units of each arm.
    Buckets { n_min: usize, bucket_size: usize },
    /// Every midpoint between consecutive distinct values; every child keeps
    /// at least `min_leaf` units in total.
    AllValues { min_leaf: usize },
}

/// Ascending candidate thresholds for `feature` within the leaf holding `indices`.
pub fn candidate_splits(data: &CausalDataset, indices: &[usize], feature: usize, rule: CandidateRule) -> Vec<f64> {
    let col = data.column(feature);
    let mut treat: Vec<f64> = indices.iter().filter(|&&i| data.is_treated(i)).map(|&i| col[i]).collect();
    let mut control: Vec<f64> = indices.iter().filter(|&&i| !data.is_treated(i)).map(|&i| col[i]).collect();
    treat.sort_by(f64::total_cmp);
    control.sort_by(f64::total_cmp);
    let mut all: Vec<f64> = indices.iter().map(|&i| col[i]).collect();
    all.sort_by(f64::total_cmp);
    thresholds(&treat, &control, &all, rule)
}

/// Candidates from already sorted per-arm and pooled covariate values.
pub(crate) fn thresholds(treat: &[f64], control: &[f64], all: &[f64], rule: CandidateRule) -> Vec<f64> {
    match rule {
        CandidateRule::Buckets { n_min, bucket_size } => bucket_thresholds(treat, control, n_min, bucket_size),
        CandidateRule::AllValues { min_leaf } => midpoint_thresholds(all, min_leaf),
    }
}

fn count_le(sorted: &[f64], t: f64) -> usize {
    sorted.partition_point(|&v| v <= t)
}

fn bucket_thresholds(treat: &[f64], control: &[f64], n_min: usize, bucket_size: usize) -> Vec<f64> {
    let (n1, n0) = (treat.len(), control.len());
    if n1 < 2 * n_min || n0 < 2 * n_min {
        return Vec::new();
    }
    // Common bucket count: b units per bucket in the smaller arm, but never
    // fewer than n_min buckets (and never more buckets than units).
    let b = bucket_size.max(1);
    let buckets = (n1 / b).min(n0 / b).max(n_min).min(n1).min(n0).max(1);
    let (s1, s0) = (n1 / buckets, n0 / buckets);

    let mut out: Vec<f64> = Vec::new();
    let mut prev = (0, 0);
    for k in 1..buckets {
        // Remainder units sit in the last bucket, so bucket k ends at k*s - 1.
        let t = 0.5 * (treat[k * s1 - 1] + control[k * s0 - 1]);
        let (l1, l0) = (count_le(treat, t), count_le(control, t));
        if l1 < n_min || l0 < n_min || n1 - l1 < n_min || n0 - l0 < n_min {
            continue;
        }
        // The averaged threshold can lag one arm's bucket boundary; keep only
        // candidates that move units of both arms past the previous one.
        if !out.is_empty() && (l1 <= prev.0 || l0 <= prev.1) {
            continue;
        }
        prev = (l1, l0);
        out.push(t);
    }
    out
}

fn midpoint_thresholds(all: &[f64], min_leaf: usize) -> Vec<f64> {
    let n = all.len();
    let min_leaf = min_leaf.max(1);
    if n < 2 * min_leaf {
        return Vec::new();
    }
    let mut out = Vec::new();
    for j in min_leaf..=(n - min_leaf) {
        // Split between positions j-1 and j.
        if all[j - 1] < all[j] {
            out.push(0.5 * (all[j - 1] + all[j]));
        }
    }
    out
}
