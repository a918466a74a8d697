//! Monte Carlo study on three synthetic designs with known treatment effects.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{CriterionSpec, Family};
use crate::data::CausalDataset;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalResult};
use crate::honest::{estimate_nodes, EstimateSource, EstimationConfig, LeafEstimates, LeafEstimator, LeafResult};
use crate::prune::{fit_pruned, CvConfig};
use crate::tree::{GrowParams, Tree};

/// One of the three data-generating designs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub id: u8,
    pub k: usize,
    pub noise_sd: f64,
    pub p: f64,
}

impl DesignSpec {
    pub fn new(id: u8) -> Result<DesignSpec> {
        let k = match id {
            1 => 2,
            2 => 10,
            3 => 20,
            _ => return Err(Error::Config(format!("unknown design {id}; expected 1, 2 or 3"))),
        };
        Ok(DesignSpec { id, k, noise_sd: 0.1, p: 0.5 })
    }

    /// Mean outcome function.
    pub fn eta(&self, x: &[f64]) -> f64 {
        match self.id {
            1 => 0.5 * x[0] + x[1],
            2 => 0.5 * (x[0] + x[1]) + x[2..6].iter().sum::<f64>(),
            _ => 0.5 * x[..4].iter().sum::<f64>() + x[4..8].iter().sum::<f64>(),
        }
    }

    /// Treatment effect function.
    pub fn kappa(&self, x: &[f64]) -> f64 {
        let positive = |v: &[f64]| v.iter().map(|&a| if a > 0.0 { a } else { 0.0 }).sum::<f64>();
        match self.id {
            1 => 0.5 * x[0],
            2 => positive(&x[..2]),
            _ => positive(&x[..4]),
        }
    }

    /// `E[Y | x, w]`.
    pub fn mean_outcome(&self, x: &[f64], treated: bool) -> f64 {
        let sign = if treated { 1.0 } else { -1.0 };
        self.eta(x) + 0.5 * sign * self.kappa(x)
    }
}

/// Draws `n` units from `design`.
pub fn generate(design: &DesignSpec, n: usize, seed: u64) -> Result<CausalDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, design.noise_sd).map_err(|e| Error::Config(e.to_string()))?;
    let mut cols = vec![Vec::with_capacity(n); design.k];
    let mut y = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut tau = Vec::with_capacity(n);
    let mut x = vec![0.0; design.k];
    for _ in 0..n {
        for (k, v) in x.iter_mut().enumerate() {
            *v = StandardNormal.sample(&mut rng);
            cols[k].push(*v);
        }
        let treated = rng.random_bool(design.p);
        y.push(design.mean_outcome(&x, treated) + noise.sample(&mut rng));
        w.push(treated as u8);
        tau.push(design.kappa(&x));
    }
    let names = (1..=design.k).map(|k| format!("x{k}")).collect();
    CausalDataset::new(y, w, cols)?
        .with_marginal_p(design.p)?
        .with_true_cate(tau)?
        .with_feature_names(names)
}

/// Which data builds the tree and estimates its leaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// Build on the training sample, estimate on the estimation sample.
    Honest,
    /// Build and estimate on the training sample.
    Adaptive,
    /// Build and estimate on the training and estimation samples together.
    AdaptiveUnion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub family: Family,
    pub variant: Variant,
}

impl EstimatorSpec {
    pub fn new(family: Family, variant: Variant) -> Self {
        EstimatorSpec { family, variant }
    }

    pub fn label(&self) -> String {
        let v = match self.variant {
            Variant::Honest => "H",
            Variant::Adaptive => "A",
            Variant::AdaptiveUnion => "AU",
        };
        format!("{}-{v}", self.family.short())
    }

    /// Parses labels such as `ct-h`, `TOT-A` or `f-au`.
    pub fn parse(s: &str) -> Result<Self> {
        let (f, v) = s
            .trim()
            .rsplit_once('-')
            .ok_or_else(|| Error::Config(format!("estimator `{s}` must look like ct-h, ct-a or ct-au")))?;
        let variant = match v.to_ascii_lowercase().as_str() {
            "h" | "honest" => Variant::Honest,
            "a" | "adaptive" => Variant::Adaptive,
            "au" | "union" => Variant::AdaptiveUnion,
            other => return Err(Error::Config(format!("unknown variant `{other}`"))),
        };
        Ok(EstimatorSpec { family: Family::parse(f)?, variant })
    }

    /// Every family in every variant.
    pub fn all() -> Vec<EstimatorSpec> {
        let mut out = Vec::new();
        for variant in [Variant::Honest, Variant::Adaptive, Variant::AdaptiveUnion] {
            for family in Family::ALL {
                out.push(EstimatorSpec { family, variant });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub design: DesignSpec,
    pub n_train: usize,
    pub n_est: usize,
    pub n_test: usize,
    pub replications: usize,
    pub estimators: Vec<EstimatorSpec>,
    pub seed: u64,
    pub grow: GrowParams,
    /// Folds for every family except TOT; `None` uses the defaults.
    pub folds: Option<usize>,
    pub level: f64,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl SimConfig {
    pub fn new(design: u8, n: usize, replications: usize, seed: u64) -> Result<SimConfig> {
        Ok(SimConfig {
            design: DesignSpec::new(design)?,
            n_train: n,
            n_est: n,
            n_test: 6000,
            replications,
            estimators: EstimatorSpec::all(),
            seed,
            grow: GrowParams::default(),
            folds: None,
            level: 0.9,
            threads: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("need at least one replication".into()));
        }
        if self.n_train == 0 || self.n_est == 0 || self.n_test == 0 {
            return Err(Error::Config("sample sizes must be positive".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators configured".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("confidence level {} outside (0,1)", self.level)));
        }
        self.grow.validate()?;
        let need = 4 * self.grow.n_min;
        if self.n_train < need {
            return Err(Error::Config(format!(
                "n_train {} is too small for leaves of {} units per arm",
                self.n_train, self.grow.n_min
            )));
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn from_kv(text: &str) -> Result<SimConfig> {
        let mut kv = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            kv.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
        }
        let get = |k: &str| kv.get(k).map(String::as_str);
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("invalid value `{v}` for `{k}`")))
        }
        let design: u8 = num("design", get("design").ok_or_else(|| Error::Config("missing key `design`".into()))?)?;
        let n: usize = match get("n") {
            Some(v) => num("n", v)?,
            None => 500,
        };
        let mut cfg = SimConfig::new(design, n, 200, 0)?;
        for (k, v) in &kv {
            match k.as_str() {
                "design" | "n" => {}
                "n_train" => cfg.n_train = num(k, v)?,
                "n_est" => cfg.n_est = num(k, v)?,
                "n_test" => cfg.n_test = num(k, v)?,
                "replications" | "reps" => cfg.replications = num(k, v)?,
                "seed" => cfg.seed = num(k, v)?,
                "n_min" => cfg.grow.n_min = num(k, v)?,
                "buckets" | "bucket_size" => cfg.grow.bucket_size = num(k, v)?,
                "tot_min_leaf" => cfg.grow.tot_min_leaf = num(k, v)?,
                "folds" => cfg.folds = Some(num(k, v)?),
                "level" => cfg.level = num(k, v)?,
                "threads" => cfg.threads = Some(num(k, v)?),
                "estimators" => {
                    cfg.estimators = if v.eq_ignore_ascii_case("all") {
                        EstimatorSpec::all()
                    } else {
                        v.split(',').filter(|s| !s.trim().is_empty()).map(EstimatorSpec::parse).collect::<Result<_>>()?
                    }
                }
                other => return Err(Error::Config(format!("unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Outcome of one estimator in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOutcome {
    pub estimator: EstimatorSpec,
    pub result: std::result::Result<FitSummary, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub leaves: usize,
    pub eval: EvalResult,
    /// Leaves whose estimate was taken from an ancestor for lack of support.
    pub fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub rep: usize,
    pub seed: u64,
    pub outcomes: Vec<EstimatorOutcome>,
}

impl ReplicationResult {
    pub fn get(&self, e: &EstimatorSpec) -> Option<&FitSummary> {
        self.outcomes.iter().find(|o| o.estimator == *e).and_then(|o| o.result.as_ref().ok())
    }
}

/// Seed of replication `rep`, from an independent ChaCha stream.
pub fn replication_seed(seed: u64, rep: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng.next_u64()
}

/// Runs every configured estimator on one paired draw of train, estimation
/// and test samples.
pub fn run_replication(cfg: &SimConfig, rep: usize) -> Result<ReplicationResult> {
    cfg.validate()?;
    let seed = replication_seed(cfg.seed, rep);
    let (n_tr, n_est) = (cfg.n_train, cfg.n_est);
    let data = generate(&cfg.design, n_tr + n_est + cfg.n_test, seed)?;
    let train: Vec<usize> = (0..n_tr).collect();
    let est: Vec<usize> = (n_tr..n_tr + n_est).collect();
    let union: Vec<usize> = (0..n_tr + n_est).collect();
    let test: Vec<usize> = (n_tr + n_est..data.len()).collect();
    let cv_seed = seed ^ 0x5eed_cafe;

    // Trees depend only on the objective and the building sample, so TOT-H
    // and TOT-A share one.
    let mut cache: HashMap<(Family, bool, bool), std::result::Result<Tree, String>> = HashMap::new();
    let mut outcomes = Vec::with_capacity(cfg.estimators.len());
    for e in &cfg.estimators {
        let honest = e.variant == Variant::Honest;
        let on_union = e.variant == Variant::AdaptiveUnion;
        let build = if on_union { &union } else { &train };
        let result = (|| -> Result<FitSummary> {
            let spec = CriterionSpec::new(e.family, honest, cfg.design.p, if honest { n_est } else { build.len() })?;
            let key = (e.family, spec.honest_objective(), on_union);
            let tree = match cache.get(&key) {
                Some(t) => t.clone(),
                None => {
                    let mut cv = CvConfig::for_spec(&spec, cv_seed);
                    if let (Some(k), false) = (cfg.folds, e.family == Family::TransformedOutcome) {
                        cv.folds = k;
                    }
                    let t = fit_pruned(&data, build, &spec, &cfg.grow, &cv).map(|f| f.tree).map_err(|e| e.to_string());
                    cache.insert(key, t.clone());
                    t
                }
            }
            .map_err(Error::Support)?;
            let est_cfg = EstimationConfig {
                level: cfg.level,
                estimator: if e.family == Family::TransformedOutcome {
                    LeafEstimator::TransformedMean
                } else {
                    LeafEstimator::ArmDifference
                },
                weighting: None,
                source: if honest { EstimateSource::Honest } else { EstimateSource::Adaptive },
            };
            let units = if honest { &est } else { build };
            let (estimates, fallbacks) = estimates_with_fallback(&tree, &data, units, &est_cfg)?;
            let eval = evaluate(&tree, &estimates, &data, &test)?;
            Ok(FitSummary { leaves: tree.n_leaves(), eval, fallbacks })
        })();
        outcomes.push(EstimatorOutcome { estimator: *e, result: result.map_err(|e| e.to_string()) });
    }
    Ok(ReplicationResult { rep, seed, outcomes })
}

/// Leaf estimates in which unsupported leaves borrow the estimate of their
/// nearest supported ancestor; also returns how many leaves did so.
pub fn estimates_with_fallback(
    tree: &Tree,
    data: &CausalDataset,
    units: &[usize],
    cfg: &EstimationConfig,
) -> Result<(LeafEstimates, usize)> {
    let nodes = estimate_nodes(tree, data, units, cfg)?;
    let mut leaves = BTreeMap::new();
    let mut fallbacks = 0;
    for leaf in tree.leaves() {
        let result = match nodes[leaf] {
            LeafResult::Available(e) => LeafResult::Available(e),
            LeafResult::Unavailable { n_treat, n_control } => {
                fallbacks += 1;
                tree.ancestors(leaf)
                    .into_iter()
                    .find_map(|a| nodes[a].estimate().copied())
                    .map(LeafResult::Available)
                    .ok_or(Error::Unavailable { leaf, n_treat, n_control })?
            }
        };
        leaves.insert(leaf, result);
    }
    Ok((LeafEstimates { level: cfg.level, leaves }, fallbacks))
}

/// Runs all replications (in parallel) and aggregates them.
pub fn run(cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let work = || (0..cfg.replications).into_par_iter().map(|r| run_replication(cfg, r)).collect::<Result<Vec<_>>>();
    let reps = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    Ok(aggregate(cfg, reps))
}

/// Per-replication quantity used in summaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Leaves,
    MseAdjusted,
    MseRaw,
    MseTot,
    Coverage,
    CoverageLeaf,
}

impl Metric {
    pub fn of(self, s: &FitSummary) -> f64 {
        match self {
            Metric::Leaves => s.leaves as f64,
            Metric::MseAdjusted => s.eval.mse_tau_infeasible,
            Metric::MseRaw => s.eval.mse_tau_raw,
            Metric::MseTot => s.eval.mse_tot,
            Metric::Coverage => s.eval.coverage,
            Metric::CoverageLeaf => s.eval.coverage_leaf,
        }
    }
}

/// Mean and Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary { mean: f64::NAN, se: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt()
        } else {
            f64::NAN
        };
        Summary { mean, se, n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorRow {
    pub estimator: EstimatorSpec,
    pub label: String,
    pub failures: usize,
    pub fallbacks: usize,
    pub leaves: Summary,
    pub mse_adjusted: Summary,
    pub mse_raw: Summary,
    pub mse_tot: Summary,
    pub coverage: Summary,
    pub coverage_leaf: Summary,
    /// Mean over replications of raw MSE relative to CT-H.
    pub ratio_to_ct_h: Option<Summary>,
    /// Ratio of mean raw MSEs relative to CT-H.
    pub ratio_of_means_to_ct_h: Option<f64>,
    /// For honest rows: mean ratio of raw MSE to the adaptive row of the same
    /// family built on both samples (or on the training sample if absent).
    pub honest_to_adaptive: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub rows: Vec<EstimatorRow>,
    pub replications: Vec<ReplicationResult>,
}

/// Values of `metric` for `e` over replications where it succeeded.
fn values(reps: &[ReplicationResult], e: &EstimatorSpec, metric: Metric) -> Vec<f64> {
    reps.iter().filter_map(|r| r.get(e)).map(|s| metric.of(s)).collect()
}

/// Per-replication ratios `metric(a)/metric(b)` over replications where both succeeded.
fn ratios(reps: &[ReplicationResult], a: &EstimatorSpec, b: &EstimatorSpec, metric: Metric) -> Vec<f64> {
    reps.iter()
        .filter_map(|r| Some(metric.of(r.get(a)?) / metric.of(r.get(b)?)))
        .collect()
}

pub fn aggregate(cfg: &SimConfig, replications: Vec<ReplicationResult>) -> SimReport {
    let reference = EstimatorSpec::new(Family::CausalTree, Variant::Honest);
    let has_ref = cfg.estimators.contains(&reference);
    let rows = cfg
        .estimators
        .iter()
        .map(|e| {
            let reps = &replications;
            let failures = reps
                .iter()
                .flat_map(|r| &r.outcomes)
                .filter(|o| o.estimator == *e && o.result.is_err())
                .count();
            let fallbacks = reps.iter().filter_map(|r| r.get(e)).map(|s| s.fallbacks).sum();
            let summary = |m| Summary::of(&values(reps, e, m));
            let ratio_to_ct_h = has_ref.then(|| Summary::of(&ratios(reps, e, &reference, Metric::MseRaw)));
            let ratio_of_means_to_ct_h = has_ref.then(|| {
                Summary::of(&values(reps, e, Metric::MseRaw)).mean / Summary::of(&values(reps, &reference, Metric::MseRaw)).mean
            });
            let honest_to_adaptive = (e.variant == Variant::Honest)
                .then(|| {
                    [Variant::AdaptiveUnion, Variant::Adaptive]
                        .into_iter()
                        .map(|v| EstimatorSpec::new(e.family, v))
                        .find(|a| cfg.estimators.contains(a))
                })
                .flatten()
                .map(|a| Summary::of(&ratios(reps, e, &a, Metric::MseRaw)));
            EstimatorRow {
                estimator: *e,
                label: e.label(),
                failures,
                fallbacks,
                leaves: summary(Metric::Leaves),
                mse_adjusted: summary(Metric::MseAdjusted),
                mse_raw: summary(Metric::MseRaw),
                mse_tot: summary(Metric::MseTot),
                coverage: summary(Metric::Coverage),
                coverage_leaf: summary(Metric::CoverageLeaf),
                ratio_to_ct_h,
                ratio_of_means_to_ct_h,
                honest_to_adaptive,
            }
        })
        .collect();
    SimReport { config: cfg.clone(), rows, replications }
}

impl SimReport {
    pub fn row(&self, e: &EstimatorSpec) -> Option<&EstimatorRow> {
        self.rows.iter().find(|r| r.estimator == *e)
    }

    /// Mean and standard error of the paired difference `metric(a) - metric(b)`.
    pub fn paired_difference(&self, a: &EstimatorSpec, b: &EstimatorSpec, metric: Metric) -> Summary {
        let d: Vec<f64> = self
            .replications
            .iter()
            .filter_map(|r| Some(metric.of(r.get(a)?) - metric.of(r.get(b)?)))
            .collect();
        Summary::of(&d)
    }

    pub const CSV_COLUMNS: [&'static str; 24] = [
        "design",
        "n_train",
        "n_est",
        "estimator",
        "replications_ok",
        "failures",
        "fallback_leaves",
        "leaves_mean",
        "leaves_se",
        "mse_tau_adjusted_mean",
        "mse_tau_adjusted_se",
        "mse_tau_mean",
        "mse_tau_se",
        "mse_tot_mean",
        "mse_tot_se",
        "coverage_mean",
        "coverage_se",
        "coverage_leaf_mean",
        "ratio_to_ct_h_mean",
        "ratio_to_ct_h_se",
        "ratio_of_means_to_ct_h",
        "honest_to_adaptive_mean",
        "honest_to_adaptive_se",
        "seed",
    ];

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::CSV_COLUMNS)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let c = &self.config;
            w.write_record([
                c.design.id.to_string(),
                c.n_train.to_string(),
                c.n_est.to_string(),
                r.label.clone(),
                r.leaves.n.to_string(),
                r.failures.to_string(),
                r.fallbacks.to_string(),
                r.leaves.mean.to_string(),
                r.leaves.se.to_string(),
                r.mse_adjusted.mean.to_string(),
                r.mse_adjusted.se.to_string(),
                r.mse_raw.mean.to_string(),
                r.mse_raw.se.to_string(),
                r.mse_tot.mean.to_string(),
                r.mse_tot.se.to_string(),
                r.coverage.mean.to_string(),
                r.coverage.se.to_string(),
                r.coverage_leaf.mean.to_string(),
                opt(r.ratio_to_ct_h.map(|s| s.mean)),
                opt(r.ratio_to_ct_h.map(|s| s.se)),
                opt(r.ratio_of_means_to_ct_h),
                opt(r.honest_to_adaptive.map(|s| s.mean)),
                opt(r.honest_to_adaptive.map(|s| s.se)),
                c.seed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Text tables: leaf counts, MSE ratios, honest-to-adaptive ratios and
    /// coverage by estimator, then the levels of both MSE measures.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = format!(
            "Design {} (K={}), N_train={}, N_est={}, N_test={}, replications={}, seed={}\n",
            c.design.id, c.design.k, c.n_train, c.n_est, c.n_test, c.replications, c.seed
        );
        let panel = |out: &mut String, title: &str, f: &dyn Fn(&EstimatorRow) -> Option<String>| {
            let _ = writeln!(out, "\n{title}");
            for r in &self.rows {
                if let Some(v) = f(r) {
                    let _ = writeln!(out, "  {:<8} {v}", r.label);
                }
            }
        };
        let ms = |s: &Summary| format!("{:.4} ({:.4})", s.mean, s.se);
        panel(&mut out, "Number of leaves", &|r| Some(format!("{:.2} ({:.2})", r.leaves.mean, r.leaves.se)));
        panel(&mut out, "Infeasible MSE relative to CT-H (mean of ratios)", &|r| r.ratio_to_ct_h.map(|s| ms(&s)));
        panel(&mut out, "Infeasible MSE, honest to adaptive", &|r| r.honest_to_adaptive.map(|s| ms(&s)));
        panel(&mut out, &format!("Coverage of {:.0}% intervals", c.level * 100.0), &|r| Some(ms(&r.coverage)));
        panel(&mut out, "Infeasible MSE", &|r| Some(ms(&r.mse_raw)));
        panel(&mut out, "Adjusted infeasible MSE", &|r| Some(ms(&r.mse_adjusted)));
        panel(&mut out, "Transformed-outcome MSE", &|r| Some(ms(&r.mse_tot)));
        let failed: usize = self.rows.iter().map(|r| r.failures).sum();
        let fell: usize = self.rows.iter().map(|r| r.fallbacks).sum();
        let _ = writeln!(out, "\nfailed fits: {failed}, leaves estimated from an ancestor: {fell}");
        out
    }
}
