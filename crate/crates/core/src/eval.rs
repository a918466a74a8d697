//! Test-sample metrics: infeasible effect MSE, transformed-outcome MSE and
//! confidence-interval coverage.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::CausalDataset;
use crate::error::{Error, Result};
use crate::honest::{LeafEstimate, LeafEstimates, LeafResult};
use crate::tree::Tree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Mean of `(τ - τ̂)² - τ²` over the test sample.
    pub mse_tau_infeasible: f64,
    /// Mean of `(τ - τ̂)²`.
    pub mse_tau_raw: f64,
    pub mse_tot: f64,
    /// Share of test units whose leaf interval covers the leaf estimand.
    pub coverage: f64,
    /// Share of leaves whose interval covers the leaf estimand.
    pub coverage_leaf: f64,
    pub n_test: usize,
}

fn check_len(test: &[usize], preds: &[f64]) -> Result<()> {
    if test.is_empty() {
        return Err(Error::Validation("empty test sample".into()));
    }
    if test.len() != preds.len() {
        return Err(Error::Validation(format!("{} test units but {} predictions", test.len(), preds.len())));
    }
    Ok(())
}

fn true_cate(data: &CausalDataset) -> Result<&[f64]> {
    data.true_cate().ok_or_else(|| Error::Validation("true treatment effects are required".into()))
}

/// Adjusted infeasible MSE: `mean((τ_i - τ̂_i)² - τ_i²)` over `test`, with
/// `preds[k]` the prediction for unit `test[k]`.
pub fn mse_tau_infeasible(data: &CausalDataset, test: &[usize], preds: &[f64]) -> Result<f64> {
    check_len(test, preds)?;
    let tau = true_cate(data)?;
    let s: f64 = test.iter().zip(preds).map(|(&i, &p)| (tau[i] - p).powi(2) - tau[i] * tau[i]).sum();
    Ok(s / test.len() as f64)
}

/// Unadjusted infeasible MSE `mean((τ_i - τ̂_i)²)`.
pub fn mse_tau_raw(data: &CausalDataset, test: &[usize], preds: &[f64]) -> Result<f64> {
    check_len(test, preds)?;
    let tau = true_cate(data)?;
    let s: f64 = test.iter().zip(preds).map(|(&i, &p)| (tau[i] - p).powi(2)).sum();
    Ok(s / test.len() as f64)
}

/// Feasible MSE against the transformed outcome, `mean((Y*_i - τ̂_i)²)`.
pub fn mse_tot(data: &CausalDataset, test: &[usize], preds: &[f64]) -> Result<f64> {
    check_len(test, preds)?;
    let s: f64 = test.iter().zip(preds).map(|(&i, &p)| (data.transformed(i) - p).powi(2)).sum();
    Ok(s / test.len() as f64)
}

/// Mean true effect of the test units reaching each leaf.
pub fn leaf_estimands(tree: &Tree, data: &CausalDataset, test: &[usize]) -> Result<BTreeMap<usize, f64>> {
    let tau = true_cate(data)?;
    Ok(tree
        .partition(data, test)
        .into_iter()
        .filter(|(_, idx)| !idx.is_empty())
        .map(|(leaf, idx)| (leaf, idx.iter().map(|&i| tau[i]).sum::<f64>() / idx.len() as f64))
        .collect())
}

fn leaf_estimate(estimates: &LeafEstimates, leaf: usize) -> Result<&LeafEstimate> {
    match estimates.get(leaf) {
        Some(LeafResult::Available(e)) => Ok(e),
        Some(LeafResult::Unavailable { n_treat, n_control }) => {
            Err(Error::Unavailable { leaf, n_treat: *n_treat, n_control: *n_control })
        }
        None => Err(Error::Unavailable { leaf, n_treat: 0, n_control: 0 }),
    }
}

/// Unit-weighted and leaf-weighted coverage of the leaf estimands.
pub fn coverage(
    tree: &Tree,
    data: &CausalDataset,
    test: &[usize],
    estimates: &LeafEstimates,
    estimands: &BTreeMap<usize, f64>,
) -> Result<(f64, f64)> {
    if test.is_empty() {
        return Err(Error::Validation("empty test sample".into()));
    }
    let mut units = 0usize;
    let mut leaves = (0usize, 0usize);
    for (leaf, idx) in tree.partition(data, test) {
        if idx.is_empty() {
            continue;
        }
        let e = leaf_estimate(estimates, leaf)?;
        let target = *estimands
            .get(&leaf)
            .ok_or_else(|| Error::Validation(format!("no estimand for leaf {leaf}")))?;
        let hit = e.covers(target);
        units += if hit { idx.len() } else { 0 };
        leaves.0 += hit as usize;
        leaves.1 += 1;
    }
    Ok((units as f64 / test.len() as f64, leaves.0 as f64 / leaves.1 as f64))
}

/// Leaf-constant predictions for the units of `test`.
pub fn predictions(tree: &Tree, data: &CausalDataset, test: &[usize], estimates: &LeafEstimates) -> Result<Vec<f64>> {
    test.iter().map(|&i| leaf_estimate(estimates, tree.apply_row(data, i)).map(|e| e.tau_hat)).collect()
}

/// All metrics for one fitted tree on a test sample with known effects.
pub fn evaluate(tree: &Tree, estimates: &LeafEstimates, data: &CausalDataset, test: &[usize]) -> Result<EvalResult> {
    let preds = predictions(tree, data, test, estimates)?;
    let estimands = leaf_estimands(tree, data, test)?;
    let (coverage, coverage_leaf) = coverage(tree, data, test, estimates, &estimands)?;
    Ok(EvalResult {
        mse_tau_infeasible: mse_tau_infeasible(data, test, &preds)?,
        mse_tau_raw: mse_tau_raw(data, test, &preds)?,
        mse_tot: mse_tot(data, test, &preds)?,
        coverage,
        coverage_leaf,
        n_test: test.len(),
    })
}
