//! Splitting and cross-validation objectives for the eight estimators.
//!
//! Every criterion is oriented so that larger is better: values are negated
//! (adjusted) mean squared errors. Partition values are sums of per-leaf terms
//! normalised by the size `n` of the sample the statistics come from, so a
//! split gain is simply `term(left) + term(right) - term(parent)`, except for
//! the squared t-statistic family, whose split gain is `T²` itself.

mod comparison;
mod cv;

pub use comparison::{comparison_identities, ct_h_gain_formula, BinaryCells, ComparisonTerms};
pub use cv::cv_value;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::LeafStats;

/// Splitting family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    /// Causal tree: targets the MSE of leaf treatment effects directly.
    #[serde(rename = "ct")]
    CausalTree,
    /// Conventional CART on the transformed outcome.
    #[serde(rename = "tot")]
    TransformedOutcome,
    /// Fit of a within-leaf intercept-plus-treatment model.
    #[serde(rename = "fit")]
    Fit,
    /// Squared t-statistic for equality of child treatment effects.
    #[serde(rename = "ts")]
    TStatistic,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::TransformedOutcome, Family::Fit, Family::TStatistic, Family::CausalTree];

    pub fn short(self) -> &'static str {
        match self {
            Family::CausalTree => "CT",
            Family::TransformedOutcome => "TOT",
            Family::Fit => "F",
            Family::TStatistic => "TS",
        }
    }

    pub fn parse(s: &str) -> Result<Family> {
        match s.to_ascii_lowercase().as_str() {
            "ct" | "causal" => Ok(Family::CausalTree),
            "tot" => Ok(Family::TransformedOutcome),
            "fit" | "f" => Ok(Family::Fit),
            "ts" => Ok(Family::TStatistic),
            other => Err(Error::Config(format!("unknown estimator family `{other}`"))),
        }
    }
}

/// Whether the tree targets population means of the outcome or treatment effects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Prediction,
    Treatment,
}

/// Which objective governs splitting, pruning and cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionSpec {
    pub family: Family,
    pub honest: bool,
    pub mode: Mode,
    /// Marginal treated share.
    pub p: f64,
    /// Size of the sample that will be used for leaf estimation.
    pub n_est: usize,
}

impl CriterionSpec {
    pub fn new(family: Family, honest: bool, p: f64, n_est: usize) -> Result<Self> {
        let spec = CriterionSpec { family, honest, mode: Mode::Treatment, p, n_est };
        spec.validate()?;
        Ok(spec)
    }

    /// Population-mean (prediction) criterion of the causal-tree family.
    pub fn prediction(honest: bool, n_est: usize) -> Result<Self> {
        let spec = CriterionSpec { family: Family::CausalTree, honest, mode: Mode::Prediction, p: 0.5, n_est };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::Config(format!("treated share {} outside (0,1)", self.p)));
        }
        if self.honest && self.n_est == 0 {
            return Err(Error::Config("honest criteria need n_est >= 1".into()));
        }
        if self.mode == Mode::Prediction && self.family != Family::CausalTree {
            return Err(Error::Config(format!(
                "prediction mode is only defined for the CT family, not {}",
                self.family.short()
            )));
        }
        Ok(())
    }

    /// Short label such as `CT-H` or `TOT-A`.
    pub fn label(&self) -> String {
        format!("{}-{}", self.family.short(), if self.honest { "H" } else { "A" })
    }

    /// Criterion used for pruning and cross-validation: TS trees are pruned
    /// with the causal-tree objective of the same honesty.
    pub fn pruning_spec(&self) -> CriterionSpec {
        match self.family {
            Family::TStatistic => CriterionSpec { family: Family::CausalTree, ..*self },
            _ => *self,
        }
    }

    /// TOT trees use the same (adaptive) CART criterion regardless of honesty.
    pub(crate) fn honest_objective(&self) -> bool {
        self.honest && self.family != Family::TransformedOutcome
    }
}

fn support(what: &str, stats: &LeafStats) -> Error {
    Error::Support(format!(
        "{what} (n_treat={}, n_control={})",
        stats.n_treat(),
        stats.n_control()
    ))
}

/// Difference of the treated and control means.
pub fn tau_hat(stats: &LeafStats) -> Result<f64> {
    match (stats.mean_treat(), stats.mean_control()) {
        (Some(t), Some(c)) => Ok(t - c),
        _ => Err(support("treatment effect needs both arms", stats)),
    }
}

fn arm_vars(stats: &LeafStats) -> Result<(f64, f64)> {
    match (stats.var_treat(), stats.var_control()) {
        (Some(t), Some(c)) => Ok((t, c)),
        _ => Err(support("variance needs two units per arm", stats)),
    }
}

pub(crate) fn ct_adaptive_term(stats: &LeafStats, n: usize) -> Result<f64> {
    let tau = tau_hat(stats)?;
    Ok(stats.n() as f64 * tau * tau / n as f64)
}

pub(crate) fn ct_honest_parts(n_leaf: usize, tau: f64, vt: f64, vc: f64, n: usize, n_est: usize, p: f64) -> f64 {
    let n = n as f64;
    n_leaf as f64 * tau * tau / n - (1.0 / n + 1.0 / n_est as f64) * (vt / p + vc / (1.0 - p))
}

pub(crate) fn ct_honest_term(stats: &LeafStats, n: usize, n_est: usize, p: f64) -> Result<f64> {
    let tau = tau_hat(stats)?;
    let (vt, vc) = arm_vars(stats)?;
    Ok(ct_honest_parts(stats.n(), tau, vt, vc, n, n_est, p))
}

pub(crate) fn prediction_term(stats: &LeafStats, honest: bool, n: usize, n_est: usize) -> Result<f64> {
    let mean = stats.mean_all().ok_or_else(|| support("empty leaf", stats))?;
    let fit = stats.n() as f64 * mean * mean / n as f64;
    if !honest {
        return Ok(fit);
    }
    let var = stats.var_all().ok_or_else(|| support("variance needs two units", stats))?;
    Ok(fit - (1.0 / n as f64 + 1.0 / n_est as f64) * var)
}

pub(crate) fn tot_term(stats: &LeafStats, n: usize) -> Result<f64> {
    let mean = stats.transformed.mean.ok_or_else(|| support("empty leaf", stats))?;
    Ok(stats.n() as f64 * mean * mean / n as f64)
}

pub(crate) fn fit_term(stats: &LeafStats, honest: bool, n: usize, n_est: usize) -> Result<f64> {
    let (mt, mc) = match (stats.mean_treat(), stats.mean_control()) {
        (Some(t), Some(c)) => (t, c),
        _ => return Err(support("fit model needs both arms", stats)),
    };
    let fit = (stats.n_treat() as f64 * mt * mt + stats.n_control() as f64 * mc * mc) / n as f64;
    if !honest {
        return Ok(fit);
    }
    let (vt, vc) = arm_vars(stats)?;
    Ok(fit - (1.0 / n as f64 + 1.0 / n_est as f64) * (vt + vc))
}

/// `(1/N) Σ_ℓ n_ℓ τ̂_ℓ²`: the in-sample causal-tree criterion.
pub fn adaptive_ct_value(leaves: &[LeafStats], n: usize) -> Result<f64> {
    leaves.iter().map(|s| ct_adaptive_term(s, n)).sum()
}

/// Honest causal-tree criterion: in-sample fit of the effects minus the
/// expected variance of the leaf estimates, for a training sample of size
/// `n_train` and an estimation sample of size `n_est`.
pub fn honest_ct_value(leaves: &[LeafStats], n_train: usize, n_est: usize, p: f64) -> Result<f64> {
    leaves.iter().map(|s| ct_honest_term(s, n_train, n_est, p)).sum()
}

/// Prediction-mode criterion on the pooled outcome.
pub fn prediction_value(leaves: &[LeafStats], honest: bool, n: usize, n_est: usize) -> Result<f64> {
    leaves.iter().map(|s| prediction_term(s, honest, n, n_est)).sum()
}

/// CART criterion on the transformed outcome.
pub fn tot_value(leaves: &[LeafStats], n: usize) -> Result<f64> {
    leaves.iter().map(|s| tot_term(s, n)).sum()
}

/// Criterion of the within-leaf intercept-plus-treatment fit.
pub fn fit_value(leaves: &[LeafStats], honest: bool, n: usize, n_est: usize) -> Result<f64> {
    leaves.iter().map(|s| fit_term(s, honest, n, n_est)).sum()
}

/// Squared t-statistic for `τ_L = τ_R` given a pooled within-cell variance.
pub fn ts_statistic(left: &LeafStats, right: &LeafStats, pooled_var: f64) -> Result<f64> {
    let diff = tau_hat(left)? - tau_hat(right)?;
    let inv: f64 = [left.n_treat(), left.n_control(), right.n_treat(), right.n_control()]
        .iter()
        .map(|&c| 1.0 / c as f64)
        .sum();
    let v = pooled_var * inv;
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Numerical(format!("t-statistic variance {v} is not positive")));
    }
    Ok(diff * diff / v)
}

/// Within-cell variance pooled over the four (child × arm) cells of a split.
pub fn pooled_cell_variance(left: &LeafStats, right: &LeafStats) -> Result<f64> {
    let mut ss = 0.0;
    let mut df = 0usize;
    for arm in [left.treat, left.control, right.treat, right.control] {
        let var = arm.var.ok_or_else(|| Error::Support("t-statistic needs two units per cell".into()))?;
        ss += var * (arm.n - 1) as f64;
        df += arm.n - 1;
    }
    Ok(ss / df as f64)
}

/// Squared t-statistic split statistic with the pooled conditional variance.
pub fn ts_split_stat(left: &LeafStats, right: &LeafStats) -> Result<f64> {
    ts_statistic(left, right, pooled_cell_variance(left, right)?)
}

/// Contribution of one leaf to the partition value of `spec`, for statistics
/// computed on a sample of size `n`. TS uses the causal-tree term.
pub fn node_term(spec: &CriterionSpec, stats: &LeafStats, n: usize) -> Result<f64> {
    if spec.mode == Mode::Prediction {
        return prediction_term(stats, spec.honest, n, spec.n_est);
    }
    match spec.family {
        Family::CausalTree | Family::TStatistic => {
            if spec.honest {
                ct_honest_term(stats, n, spec.n_est, spec.p)
            } else {
                ct_adaptive_term(stats, n)
            }
        }
        Family::TransformedOutcome => tot_term(stats, n),
        Family::Fit => fit_term(stats, spec.honest, n, spec.n_est),
    }
}

/// Partition value: the sum of [`node_term`] over leaves.
pub fn partition_value(spec: &CriterionSpec, leaves: &[LeafStats], n: usize) -> Result<f64> {
    leaves.iter().map(|s| node_term(spec, s, n)).sum()
}

/// Improvement of the splitting objective when `parent` is split into `left` and `right`.
pub fn split_gain(spec: &CriterionSpec, parent: &LeafStats, left: &LeafStats, right: &LeafStats, n: usize) -> Result<f64> {
    if spec.family == Family::TStatistic && spec.mode == Mode::Treatment {
        return ts_split_stat(left, right);
    }
    Ok(node_term(spec, left, n)? + node_term(spec, right, n)? - node_term(spec, parent, n)?)
}
