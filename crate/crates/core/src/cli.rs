//! Command-line interface: `fit`, `predict`, `simulate` and `generate`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::criteria::{CriterionSpec, Family};
use crate::data::{load_csv, read_covariates, split_sample, write_csv, CausalDataset, CsvSchema};
use crate::error::{Error, Result};
use crate::honest::{
    estimate_with, estimates_table, read_estimates_csv, write_estimates_csv, EstimateSource, EstimationConfig,
    LeafEstimates, LeafEstimator, LeafResult, WeightingConfig,
};
use crate::prune::{fit_pruned, CvConfig};
use crate::sim::{generate, run, DesignSpec, SimConfig};
use crate::tree::{GrowParams, Tree};

#[derive(Debug, Parser)]
#[command(name = "causal-tree", version, about = "Honest causal trees for heterogeneous treatment effects")]
pub struct Cli {
    /// Worker threads for parallel work.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Grow, cross-validate and prune a tree, then estimate leaf effects.
    Fit(FitArgs),
    /// Apply a fitted model to new rows.
    Predict(PredictArgs),
    /// Run a Monte Carlo study described by a key = value config file.
    Simulate(SimulateArgs),
    /// Write a sample from one of the simulation designs as CSV.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Separate estimation-sample CSV for honest fits; otherwise the input is split.
    #[arg(long)]
    pub est_data: Option<PathBuf>,
    #[arg(long, default_value = "y")]
    pub outcome: String,
    #[arg(long, default_value = "w")]
    pub treatment: String,
    /// Comma-separated covariate columns (default: every other column).
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Propensity score column.
    #[arg(long)]
    pub propensity: Option<String>,
    /// Column of known effects in simulated data; kept out of the covariates.
    #[arg(long)]
    pub true_cate: Option<String>,
    /// Splitting family: ct, tot, fit or ts.
    #[arg(long, default_value = "ct")]
    pub estimator: String,
    #[arg(long, conflicts_with = "adaptive")]
    pub honest: bool,
    #[arg(long)]
    pub adaptive: bool,
    #[arg(long, default_value_t = 25)]
    pub n_min: usize,
    /// Units per bucket when generating candidate splits.
    #[arg(long, default_value_t = 4)]
    pub buckets: usize,
    /// Cross-validation folds (default 5, or 10 for tot).
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long, default_value_t = 0.9)]
    pub level: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Inverse-propensity weighted leaf estimates.
    #[arg(long)]
    pub weighted: bool,
    /// Propensity trimming bounds `lo,hi`.
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.95])]
    pub trim: Vec<f64>,
    /// Share of the input used for building the tree in honest fits.
    #[arg(long, default_value_t = 0.5)]
    pub train_frac: f64,
    /// Directory for model.json, estimates.csv and report.txt.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// Estimates CSV to use instead of the ones stored in the model.
    #[arg(long)]
    pub estimates: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Output CSV (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for sim_report.csv and sim_report.txt.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub design: u8,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Everything needed to reproduce predictions of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub feature_names: Vec<String>,
    pub spec: CriterionSpec,
    pub grow: GrowParams,
    /// Selected penalty; `None` when every split was pruned away at any finite value.
    pub alpha: Option<f64>,
    pub tree: Tree,
    pub estimates: LeafEstimates,
}

impl Model {
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Model> {
        Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
    }
}

/// Fits a model in memory.
pub fn fit_model(args: &FitArgs) -> Result<Model> {
    let family = Family::parse(&args.estimator)?;
    let honest = !args.adaptive;
    let mut schema = CsvSchema::new(&args.outcome, &args.treatment);
    schema.covariates = args.covariates.clone();
    schema.propensity = args.propensity.clone();
    schema.true_cate = args.true_cate.clone();
    let data = load_csv(&args.data, &schema)?;
    if args.weighted && data.propensity().is_none() {
        return Err(Error::Config("--weighted needs a --propensity column".into()));
    }
    if args.trim.len() != 2 {
        return Err(Error::Config(format!("--trim takes two bounds `lo,hi`, got {}", args.trim.len())));
    }
    let weighting = if args.weighted {
        let w = WeightingConfig { trim: (args.trim[0], args.trim[1]), renormalize: true };
        w.validate()?;
        Some(w)
    } else {
        None
    };

    let (data, train, est) = if !honest {
        let all: Vec<usize> = (0..data.len()).collect();
        (data, all.clone(), all)
    } else if let Some(path) = &args.est_data {
        let est_data = load_csv(path, &schema)?;
        if est_data.feature_names() != data.feature_names() {
            return Err(Error::Schema("estimation file has different covariates".into()));
        }
        let n_tr = data.len();
        let joined = concat(&data, &est_data)?;
        let n = joined.len();
        (joined, (0..n_tr).collect(), (n_tr..n).collect())
    } else {
        if !(args.train_frac > 0.0 && args.train_frac < 1.0) {
            return Err(Error::Config(format!("--train-frac {} outside (0,1)", args.train_frac)));
        }
        let s = split_sample(&data, (args.train_frac, 1.0 - args.train_frac, 0.0), args.seed)?;
        let est = if s.est.is_empty() { return Err(Error::Support("empty estimation sample".into())) } else { s.est };
        (data, s.train, est)
    };

    let spec = CriterionSpec::new(family, honest, data.marginal_p(), if honest { est.len() } else { train.len() })?;
    let grow = GrowParams { n_min: args.n_min, bucket_size: args.buckets, ..GrowParams::default() };
    let mut cv = CvConfig::for_spec(&spec, args.seed);
    if let Some(k) = args.folds {
        cv.folds = k;
    }
    let fitted = fit_pruned(&data, &train, &spec, &grow, &cv)?;
    let cfg = EstimationConfig {
        level: args.level,
        estimator: if family == Family::TransformedOutcome {
            LeafEstimator::TransformedMean
        } else {
            LeafEstimator::ArmDifference
        },
        weighting,
        source: if honest { EstimateSource::Honest } else { EstimateSource::Adaptive },
    };
    let estimates = estimate_with(&fitted.tree, &data, &est, &cfg)?;
    Ok(Model {
        feature_names: data.feature_names().to_vec(),
        spec,
        grow,
        alpha: fitted.alpha.is_finite().then_some(fitted.alpha),
        tree: fitted.tree,
        estimates,
    })
}

fn concat(a: &CausalDataset, b: &CausalDataset) -> Result<CausalDataset> {
    let cols = (0..a.n_features()).map(|k| [a.column(k), b.column(k)].concat()).collect();
    let mut out = CausalDataset::new([a.outcomes(), b.outcomes()].concat(), [a.treatments(), b.treatments()].concat(), cols)?
        .with_feature_names(a.feature_names().to_vec())?;
    if let (Some(x), Some(y)) = (a.propensity(), b.propensity()) {
        out = out.with_propensity([x, y].concat())?;
    }
    Ok(out)
}

/// Subgroup report: the tree followed by each leaf's region and interval.
pub fn report(model: &Model) -> String {
    let mut out = format!(
        "{} tree with {} leaves (alpha = {})\n\n",
        model.spec.label(),
        model.tree.n_leaves(),
        model.alpha.map_or("inf".to_string(), |a| format!("{a:.6}"))
    );
    out.push_str(&model.tree.to_text(&model.feature_names));
    out.push('\n');
    out.push_str(&estimates_table(&model.tree, &model.estimates, &model.feature_names));
    out
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let model = fit_model(args)?;
    std::fs::create_dir_all(&args.out_dir)?;
    model.save(&args.out_dir.join("model.json"))?;
    let f = BufWriter::new(File::create(args.out_dir.join("estimates.csv"))?);
    write_estimates_csv(f, &model.tree, &model.estimates, &model.feature_names)?;
    let text = report(&model);
    std::fs::write(args.out_dir.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

/// Per-row predictions: leaf id, estimate and interval.
pub fn predict_rows(model: &Model, estimates: &LeafEstimates, rows: &[Vec<f64>]) -> Vec<(usize, Option<(f64, f64, f64)>)> {
    rows.iter()
        .map(|x| {
            let leaf = model.tree.apply(x);
            let e = estimates.get(leaf).and_then(LeafResult::estimate).map(|e| (e.tau_hat, e.ci.0, e.ci.1));
            (leaf, e)
        })
        .collect()
}

pub fn write_predictions<W: Write>(writer: W, preds: &[(usize, Option<(f64, f64, f64)>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["row", "leaf_id", "tau_hat", "ci_lo", "ci_hi"])?;
    for (i, (leaf, e)) in preds.iter().enumerate() {
        let (t, lo, hi) = match e {
            Some((t, lo, hi)) => (t.to_string(), lo.to_string(), hi.to_string()),
            None => Default::default(),
        };
        w.write_record([(i + 1).to_string(), leaf.to_string(), t, lo, hi])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let model = Model::load(&args.model)?;
    let estimates = match &args.estimates {
        Some(p) => {
            let e = read_estimates_csv(File::open(p)?, model.estimates.level, EstimateSource::Honest)?;
            let leaves = model.tree.leaves();
            if e.leaves.keys().copied().collect::<Vec<_>>() != leaves {
                return Err(Error::Validation("estimate leaf ids do not match the tree's leaves".into()));
            }
            e
        }
        None => model.estimates.clone(),
    };
    let rows = read_covariates(File::open(&args.data)?, &model.feature_names)?;
    let preds = predict_rows(&model, &estimates, &rows);
    match &args.out {
        Some(p) => write_predictions(BufWriter::new(File::create(p)?), &preds),
        None => write_predictions(std::io::stdout().lock(), &preds),
    }
}

fn cmd_simulate(args: &SimulateArgs, threads: Option<usize>) -> Result<()> {
    let mut cfg = SimConfig::from_kv(&std::fs::read_to_string(&args.config)?)?;
    if threads.is_some() {
        cfg.threads = threads;
    }
    let report = run(&cfg)?;
    std::fs::create_dir_all(&args.out_dir)?;
    report.write_csv(BufWriter::new(File::create(args.out_dir.join("sim_report.csv"))?))?;
    let text = report.to_text();
    std::fs::write(args.out_dir.join("sim_report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let data = generate(&DesignSpec::new(args.design)?, args.n, args.seed)?;
    write_csv(&data, BufWriter::new(File::create(&args.out)?))
}

pub fn execute(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        // Ignored if the global pool already exists, e.g. in tests.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Simulate(a) => cmd_simulate(a, cli.threads),
        Command::Generate(a) => cmd_generate(a),
    }
}

/// Runs the tool and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
