//! Honest recursive partitioning for heterogeneous treatment effects.
//!
//! Trees are grown on a training sample with criteria that target the mean
//! squared error of leaf-level treatment effects, pruned by cross-validated
//! cost-complexity, and then re-estimated on an independent estimation sample
//! so that leaf confidence intervals keep their nominal coverage.
//!
//! Four splitting families are provided, each in an adaptive and an honest
//! flavour: causal trees (CT), transformed outcome trees (TOT), fit-based
//! trees (F) and squared t-statistic trees (TS).

pub mod cli;
pub mod criteria;
pub mod data;
pub mod error;
pub mod eval;
pub mod honest;
pub mod prune;
pub mod sim;
pub mod tree;

pub use criteria::{CriterionSpec, Family, Mode};
pub use data::{CausalDataset, SampleSplit};
pub use error::{Error, Result};
pub use honest::{LeafEstimate, LeafEstimator, LeafResult, WeightingConfig};
pub use prune::{CvConfig, PruneSequence};
pub use tree::{GrowParams, LeafStats, Tree};
