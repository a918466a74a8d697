//! Closed forms relating the fit, causal-tree and t-statistic criteria for a
//! single binary covariate.
//!
//! Conventions: a balanced design with `m` units in each of the four
//! (leaf × arm) cells, variances with divisor `n`, and equal training and
//! estimation sample sizes `N = 4m`.

use crate::error::{Error, Result};

/// Outcomes of the four (leaf × arm) cells of a split on a binary covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryCells {
    pub left_control: Vec<f64>,
    pub left_treat: Vec<f64>,
    pub right_control: Vec<f64>,
    pub right_treat: Vec<f64>,
}

/// Quantities of the comparison, all on the training sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonTerms {
    /// Squared t-statistic for equal control means across the two leaves.
    pub t0_sq: f64,
    /// Same for treated means.
    pub t1_sq: f64,
    /// Squared t-statistic for equal treatment effects across the leaves.
    pub t_sq: f64,
    /// Within-cell variance pooled given the split.
    pub s2_split: f64,
    /// Within-arm variance pooled without the split.
    pub s2_nosplit: f64,
    /// Reduction in the residual sum of squares of the fit model from splitting.
    pub f_gain: f64,
    /// `N` times the gain of the honest causal-tree criterion from splitting.
    pub ct_h_gain: f64,
    pub n: usize,
    pub p: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn ss(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum()
}

/// Evaluates the closed forms for `cells`.
///
/// `f_gain = S̃²·T/(1 + T/N)` with `T = T₀² + T₁²`, and
/// `ct_h_gain = ((T² − 4)(S̃² − F/N) + 2S̃²)/(p(1−p))`.
pub fn comparison_identities(cells: &BinaryCells) -> Result<ComparisonTerms> {
    let all = [&cells.left_control, &cells.left_treat, &cells.right_control, &cells.right_treat];
    let m = cells.left_control.len();
    if m == 0 || all.iter().any(|c| c.len() != m) {
        return Err(Error::Validation(format!(
            "comparison needs four equally sized non-empty cells, got {:?}",
            all.iter().map(|c| c.len()).collect::<Vec<_>>()
        )));
    }
    if all.iter().flat_map(|c| c.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite outcome in comparison cells".into()));
    }
    let n = 4 * m;
    let nf = n as f64;
    let mf = m as f64;
    let p = 0.5;

    let s2_split = all.iter().map(|c| ss(c)).sum::<f64>() / nf;
    let control: Vec<f64> = cells.left_control.iter().chain(&cells.right_control).copied().collect();
    let treat: Vec<f64> = cells.left_treat.iter().chain(&cells.right_treat).copied().collect();
    let s2_nosplit = (ss(&control) + ss(&treat)) / nf;
    if !(s2_split > 0.0) {
        return Err(Error::Numerical("cells have no within-cell variation".into()));
    }

    let t_arm = |l: &[f64], r: &[f64]| {
        let d = mean(l) - mean(r);
        d * d / (2.0 * s2_split / mf)
    };
    let t0_sq = t_arm(&cells.left_control, &cells.right_control);
    let t1_sq = t_arm(&cells.left_treat, &cells.right_treat);
    let tau_l = mean(&cells.left_treat) - mean(&cells.left_control);
    let tau_r = mean(&cells.right_treat) - mean(&cells.right_control);
    let t_sq = (tau_l - tau_r).powi(2) / (4.0 * s2_split / mf);

    let t = t0_sq + t1_sq;
    let f_gain = s2_nosplit * t / (1.0 + t / nf);
    let ct_h_gain = ct_h_gain_formula(t_sq, s2_nosplit, f_gain, n, p);
    Ok(ComparisonTerms { t0_sq, t1_sq, t_sq, s2_split, s2_nosplit, f_gain, ct_h_gain, n, p })
}

/// Right-hand side of the honest causal-tree gain decomposition.
pub fn ct_h_gain_formula(t_sq: f64, s2_nosplit: f64, f_gain: f64, n: usize, p: f64) -> f64 {
    ((t_sq - 4.0) * (s2_nosplit - f_gain / n as f64) + 2.0 * s2_nosplit) / (p * (1.0 - p))
}
