use super::{node_term, CriterionSpec, Family, Mode};
use crate::data::CausalDataset;
use crate::error::{Error, Result};
use crate::tree::{leaf_stats, LeafStats, Tree};

/// Out-of-sample value of `tree` (with training statistics stored in its
/// nodes) on the held-out units `cv_idx`. Larger is better.
///
/// Adaptive criteria use the cross-sample form
/// `Σ_ℓ n_cv,ℓ (2·est_cv,ℓ·est_tr,ℓ − est_tr,ℓ²) / N_cv`, an unbiased estimate
/// of the negated MSE up to a constant. Honest criteria evaluate the honest
/// objective on the held-out statistics alone with `N = N_cv`.
///
/// A leaf whose held-out units do not support its statistics borrows them
/// from the nearest supported ancestor while keeping its own unit counts.
pub fn cv_value(spec: &CriterionSpec, tree: &Tree, data: &CausalDataset, cv_idx: &[usize]) -> Result<f64> {
    let spec = spec.pruning_spec();
    spec.validate()?;
    let n_cv = cv_idx.len();
    if n_cv == 0 {
        return Err(Error::Support("empty cross-validation sample".into()));
    }
    let honest = spec.honest_objective();
    let routed = tree.route_all(data, cv_idx);
    let cv: Vec<LeafStats> = routed.iter().map(|idx| leaf_stats(data, idx, None)).collect();

    let mut total = 0.0;
    for leaf in tree.leaves() {
        let own = cv[leaf];
        let source = std::iter::once(leaf)
            .chain(tree.ancestors(leaf))
            .find(|&id| supported(&spec, honest, &cv[id]))
            .ok_or_else(|| {
                Error::Support(format!(
                    "cross-validation sample lacks support at the root (n_treat={}, n_control={})",
                    cv[0].n_treat(),
                    cv[0].n_control()
                ))
            })?;
        let stats = with_counts(cv[source], &own);
        total += if honest {
            node_term(&spec, &stats, n_cv)?
        } else {
            cross_term(&spec, &tree.node(leaf).stats, &stats, n_cv)?
        };
    }
    Ok(total)
}

fn supported(spec: &CriterionSpec, honest: bool, s: &LeafStats) -> bool {
    let need = if honest { 2 } else { 1 };
    if spec.mode == Mode::Prediction {
        return s.n() >= need;
    }
    match spec.family {
        Family::TransformedOutcome => s.n() >= 1,
        _ => s.n_treat() >= need && s.n_control() >= need,
    }
}

/// `stats` with the unit counts of `own`.
fn with_counts(mut stats: LeafStats, own: &LeafStats) -> LeafStats {
    stats.treat.n = own.treat.n;
    stats.control.n = own.control.n;
    stats.all.n = own.all.n;
    stats.transformed.n = own.transformed.n;
    stats
}

fn cross(n: usize, cv: Option<f64>, tr: Option<f64>, n_cv: usize) -> Result<f64> {
    if n == 0 {
        return Ok(0.0);
    }
    match (cv, tr) {
        (Some(c), Some(t)) => Ok(n as f64 * (2.0 * c * t - t * t) / n_cv as f64),
        _ => Err(Error::Support("leaf estimate unavailable for cross-validation".into())),
    }
}

fn cross_term(spec: &CriterionSpec, train: &LeafStats, cv: &LeafStats, n_cv: usize) -> Result<f64> {
    let tau = |s: &LeafStats| s.mean_treat().zip(s.mean_control()).map(|(t, c)| t - c);
    if spec.mode == Mode::Prediction {
        return cross(cv.n(), cv.mean_all(), train.mean_all(), n_cv);
    }
    match spec.family {
        Family::CausalTree | Family::TStatistic => cross(cv.n(), tau(cv), tau(train), n_cv),
        Family::TransformedOutcome => cross(cv.n(), cv.transformed.mean, train.transformed.mean, n_cv),
        Family::Fit => Ok(cross(cv.n_treat(), cv.mean_treat(), train.mean_treat(), n_cv)?
            + cross(cv.n_control(), cv.mean_control(), train.mean_control(), n_cv)?),
    }
}
