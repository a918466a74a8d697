//! Leaf-level treatment-effect estimates, standard errors and confidence
//! intervals, computed on a sample that played no part in building the tree.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::CausalDataset;
use crate::error::{Error, Result};
use crate::tree::{fmt_num, Tree};

/// Which sample produced an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimateSource {
    /// A separate estimation sample.
    Honest,
    /// The same units that built the tree.
    Adaptive,
}

/// How a leaf's effect is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LeafEstimator {
    /// Treated mean minus control mean.
    #[default]
    ArmDifference,
    /// Mean of the transformed outcome.
    TransformedMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafEstimate {
    pub tau_hat: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub n_treat: usize,
    pub n_control: usize,
    pub source: EstimateSource,
}

impl LeafEstimate {
    pub fn covers(&self, tau: f64) -> bool {
        self.ci.0 <= tau && tau <= self.ci.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LeafResult {
    Available(LeafEstimate),
    /// Too few units in an arm to estimate the effect and its variance.
    Unavailable { n_treat: usize, n_control: usize },
}

impl LeafResult {
    pub fn estimate(&self) -> Option<&LeafEstimate> {
        match self {
            LeafResult::Available(e) => Some(e),
            LeafResult::Unavailable { .. } => None,
        }
    }
}

/// Inverse-propensity weighting for observational data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightingConfig {
    /// Units whose propensity falls outside `[low, high]` are dropped.
    pub trim: (f64, f64),
    /// Normalise the weights to sum to one within each leaf and arm.
    pub renormalize: bool,
}

impl Default for WeightingConfig {
    fn default() -> Self {
        WeightingConfig { trim: (0.05, 0.95), renormalize: true }
    }
}

impl WeightingConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.trim;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::Config(format!("trim bounds ({lo}, {hi}) must satisfy 0 <= low < high <= 1")));
        }
        Ok(())
    }
}

/// Estimates for every leaf of a tree at one confidence level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafEstimates {
    pub level: f64,
    pub leaves: BTreeMap<usize, LeafResult>,
}

impl LeafEstimates {
    pub fn get(&self, leaf: usize) -> Option<&LeafResult> {
        self.leaves.get(&leaf)
    }

    pub fn n_unavailable(&self) -> usize {
        self.leaves.values().filter(|r| r.estimate().is_none()).count()
    }
}

/// Two-sided normal critical value for confidence `level`.
pub fn z_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("confidence level {level} outside (0,1)")));
    }
    let normal = Normal::new(0.0, 1.0).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(normal.inverse_cdf(0.5 + level / 2.0))
}

/// Estimation settings shared by the entry points below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationConfig {
    pub level: f64,
    pub estimator: LeafEstimator,
    pub weighting: Option<WeightingConfig>,
    pub source: EstimateSource,
}

impl EstimationConfig {
    pub fn honest(level: f64) -> Self {
        EstimationConfig { level, estimator: LeafEstimator::ArmDifference, weighting: None, source: EstimateSource::Honest }
    }
}

/// Honest leaf estimates from the estimation-sample units `est`.
pub fn estimate_leaves(
    tree: &Tree,
    data: &CausalDataset,
    est: &[usize],
    level: f64,
    weighting: Option<&WeightingConfig>,
) -> Result<LeafEstimates> {
    let cfg = EstimationConfig { weighting: weighting.copied(), ..EstimationConfig::honest(level) };
    estimate_with(tree, data, est, &cfg)
}

/// Leaf estimates from the units that also built the tree.
pub fn adaptive_estimate_leaves(tree: &Tree, data: &CausalDataset, units: &[usize], level: f64) -> Result<LeafEstimates> {
    let cfg = EstimationConfig { source: EstimateSource::Adaptive, ..EstimationConfig::honest(level) };
    estimate_with(tree, data, units, &cfg)
}

pub fn estimate_with(tree: &Tree, data: &CausalDataset, units: &[usize], cfg: &EstimationConfig) -> Result<LeafEstimates> {
    let z = z_value(cfg.level)?;
    let weights = prepare_weights(data, cfg.weighting.as_ref())?;
    let mut leaves = BTreeMap::new();
    for (leaf, idx) in tree.partition(data, units) {
        leaves.insert(leaf, estimate_group(data, &idx, z, cfg, weights.as_deref()));
    }
    Ok(LeafEstimates { level: cfg.level, leaves })
}

/// Estimates for every node (not only leaves), indexed by node id.
pub fn estimate_nodes(tree: &Tree, data: &CausalDataset, units: &[usize], cfg: &EstimationConfig) -> Result<Vec<LeafResult>> {
    let z = z_value(cfg.level)?;
    let weights = prepare_weights(data, cfg.weighting.as_ref())?;
    Ok(tree.route_all(data, units).iter().map(|idx| estimate_group(data, idx, z, cfg, weights.as_deref())).collect())
}

/// Per-row weight, or NaN for rows that are trimmed away.
fn prepare_weights(data: &CausalDataset, cfg: Option<&WeightingConfig>) -> Result<Option<Vec<f64>>> {
    let Some(cfg) = cfg else { return Ok(None) };
    cfg.validate()?;
    let e = data
        .propensity()
        .ok_or_else(|| Error::Validation("weighted estimation needs a propensity column".into()))?;
    let (lo, hi) = cfg.trim;
    Ok(Some(
        e.iter()
            .enumerate()
            .map(|(i, &e)| {
                if e < lo || e > hi || e <= 0.0 || e >= 1.0 {
                    f64::NAN
                } else if data.is_treated(i) {
                    1.0 / e
                } else {
                    1.0 / (1.0 - e)
                }
            })
            .collect(),
    ))
}

fn finish(tau: f64, se: f64, z: f64, n_treat: usize, n_control: usize, source: EstimateSource) -> LeafResult {
    LeafResult::Available(LeafEstimate { tau_hat: tau, se, ci: (tau - z * se, tau + z * se), n_treat, n_control, source })
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var)
}

fn estimate_group(data: &CausalDataset, idx: &[usize], z: f64, cfg: &EstimationConfig, weights: Option<&[f64]>) -> LeafResult {
    let kept: Vec<usize> = match weights {
        Some(w) => idx.iter().copied().filter(|&i| !w[i].is_nan()).collect(),
        None => idx.to_vec(),
    };
    let treat: Vec<usize> = kept.iter().copied().filter(|&i| data.is_treated(i)).collect();
    let control: Vec<usize> = kept.iter().copied().filter(|&i| !data.is_treated(i)).collect();
    let (nt, nc) = (treat.len(), control.len());
    let unavailable = LeafResult::Unavailable { n_treat: nt, n_control: nc };

    match (cfg.estimator, weights) {
        (LeafEstimator::TransformedMean, _) => {
            if kept.len() < 2 {
                return unavailable;
            }
            let ys: Vec<f64> = kept.iter().map(|&i| data.transformed(i)).collect();
            let (m, v) = mean_var(&ys);
            finish(m, (v / ys.len() as f64).sqrt(), z, nt, nc, cfg.source)
        }
        (LeafEstimator::ArmDifference, None) => {
            if nt < 2 || nc < 2 {
                return unavailable;
            }
            let yt: Vec<f64> = treat.iter().map(|&i| data.outcome(i)).collect();
            let yc: Vec<f64> = control.iter().map(|&i| data.outcome(i)).collect();
            let (mt, vt) = mean_var(&yt);
            let (mc, vc) = mean_var(&yc);
            finish(mt - mc, (vt / nt as f64 + vc / nc as f64).sqrt(), z, nt, nc, cfg.source)
        }
        (LeafEstimator::ArmDifference, Some(w)) => {
            if nt < 2 || nc < 2 {
                return unavailable;
            }
            let renormalize = cfg.weighting.is_none_or(|c| c.renormalize);
            if renormalize {
                let (mt, vt) = hajek(data, &treat, w);
                let (mc, vc) = hajek(data, &control, w);
                finish(mt - mc, (vt + vc).sqrt(), z, nt, nc, cfg.source)
            } else {
                // Horvitz-Thompson contributions Y·W/e - Y·(1-W)/(1-e).
                let contrib: Vec<f64> = kept
                    .iter()
                    .map(|&i| if data.is_treated(i) { w[i] * data.outcome(i) } else { -w[i] * data.outcome(i) })
                    .collect();
                let (m, v) = mean_var(&contrib);
                finish(m, (v / contrib.len() as f64).sqrt(), z, nt, nc, cfg.source)
            }
        }
    }
}

/// Weighted mean and its sampling variance `Σ w̃²(y - ȳ)²`, with weights
/// normalised to one and an `n/(n-1)` small-sample factor.
fn hajek(data: &CausalDataset, idx: &[usize], w: &[f64]) -> (f64, f64) {
    let total: f64 = idx.iter().map(|&i| w[i]).sum();
    let mean = idx.iter().map(|&i| w[i] * data.outcome(i)).sum::<f64>() / total;
    let n = idx.len() as f64;
    let var = idx.iter().map(|&i| (w[i] / total).powi(2) * (data.outcome(i) - mean).powi(2)).sum::<f64>() * n / (n - 1.0);
    (mean, var)
}

/// Routes `x` and returns its leaf's estimate.
pub fn predict(tree: &Tree, estimates: &LeafEstimates, x: &[f64]) -> Result<LeafEstimate> {
    let leaf = tree.apply(x);
    match estimates.get(leaf) {
        Some(LeafResult::Available(e)) => Ok(*e),
        Some(LeafResult::Unavailable { n_treat, n_control }) => {
            Err(Error::Unavailable { leaf, n_treat: *n_treat, n_control: *n_control })
        }
        None => Err(Error::Unavailable { leaf, n_treat: 0, n_control: 0 }),
    }
}

pub const ESTIMATE_COLUMNS: [&str; 8] = ["leaf_id", "region", "tau_hat", "se", "ci_lo", "ci_hi", "n_treat", "n_control"];

/// Writes one row per leaf; unavailable leaves have empty estimate fields.
pub fn write_estimates_csv<W: Write>(writer: W, tree: &Tree, estimates: &LeafEstimates, names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ESTIMATE_COLUMNS)?;
    for (&leaf, r) in &estimates.leaves {
        let region = tree.region_description(leaf, names);
        let row = match r {
            LeafResult::Available(e) => vec![
                leaf.to_string(),
                region,
                e.tau_hat.to_string(),
                e.se.to_string(),
                e.ci.0.to_string(),
                e.ci.1.to_string(),
                e.n_treat.to_string(),
                e.n_control.to_string(),
            ],
            LeafResult::Unavailable { n_treat, n_control } => vec![
                leaf.to_string(),
                region,
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                n_treat.to_string(),
                n_control.to_string(),
            ],
        };
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a table written by [`write_estimates_csv`].
pub fn read_estimates_csv<R: Read>(reader: R, level: f64, source: EstimateSource) -> Result<LeafEstimates> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    for (k, col) in ESTIMATE_COLUMNS.iter().enumerate() {
        if headers.get(k) != Some(col) {
            return Err(Error::Schema(format!("expected column {} to be `{col}`", k + 1)));
        }
    }
    let mut leaves = BTreeMap::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |m: String| Error::InvalidRow { row: row + 1, message: m };
        let int = |k: usize| rec[k].parse::<usize>().map_err(|e| bad(format!("{}: {e}", ESTIMATE_COLUMNS[k])));
        let num = |k: usize| rec[k].parse::<f64>().map_err(|e| bad(format!("{}: {e}", ESTIMATE_COLUMNS[k])));
        let leaf = int(0)?;
        let (n_treat, n_control) = (int(6)?, int(7)?);
        let result = if rec[2].is_empty() {
            LeafResult::Unavailable { n_treat, n_control }
        } else {
            LeafResult::Available(LeafEstimate {
                tau_hat: num(2)?,
                se: num(3)?,
                ci: (num(4)?, num(5)?),
                n_treat,
                n_control,
                source,
            })
        };
        leaves.insert(leaf, result);
    }
    Ok(LeafEstimates { level, leaves })
}

/// Plain-text table of leaf estimates.
pub fn estimates_table(tree: &Tree, estimates: &LeafEstimates, names: &[String]) -> String {
    let mut out = format!("leaf  tau_hat  se  ci ({:.0}%)  n_treat  n_control  region\n", estimates.level * 100.0);
    for (&leaf, r) in &estimates.leaves {
        let region = tree.region_description(leaf, names);
        match r {
            LeafResult::Available(e) => out.push_str(&format!(
                "{leaf}  {}  {}  [{}, {}]  {}  {}  {region}\n",
                fmt_num(e.tau_hat),
                fmt_num(e.se),
                fmt_num(e.ci.0),
                fmt_num(e.ci.1),
                e.n_treat,
                e.n_control
            )),
            LeafResult::Unavailable { n_treat, n_control } => {
                out.push_str(&format!("{leaf}  unavailable  -  -  {n_treat}  {n_control}  {region}\n"))
            }
        }
    }
    out
}
