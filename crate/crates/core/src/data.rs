//! Dataset representation, sample splitting and CSV ingestion.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observed outcomes, binary treatment and numeric covariates for `N` units.
///
/// Covariates are stored column-major. The dataset is immutable once built
/// and is shared read-only by every algorithm in the crate, which addresses
/// subsets of it through index slices.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalDataset {
    outcomes: Vec<f64>,
    treatments: Vec<u8>,
    columns: Vec<Vec<f64>>,
    feature_names: Vec<String>,
    propensity: Option<Vec<f64>>,
    true_cate: Option<Vec<f64>>,
    marginal_p: f64,
}

impl CausalDataset {
    /// Builds a dataset from outcomes, treatment indicators and covariate columns.
    ///
    /// `marginal_p` defaults to the empirical treated share, which therefore
    /// must lie strictly inside (0, 1).
    pub fn new(outcomes: Vec<f64>, treatments: Vec<u8>, columns: Vec<Vec<f64>>) -> Result<Self> {
        let n = outcomes.len();
        if n == 0 {
            return Err(Error::Validation("dataset must contain at least one row".into()));
        }
        if treatments.len() != n {
            return Err(Error::Validation(format!(
                "treatment length {} does not match outcome length {n}",
                treatments.len()
            )));
        }
        if columns.is_empty() {
            return Err(Error::Validation("at least one covariate is required".into()));
        }
        for (i, (&y, &w)) in outcomes.iter().zip(&treatments).enumerate() {
            if !y.is_finite() {
                return Err(Error::InvalidRow { row: i + 1, message: "non-finite outcome".into() });
            }
            if w > 1 {
                return Err(Error::InvalidRow {
                    row: i + 1,
                    message: format!("treatment must be 0 or 1, got {w}"),
                });
            }
        }
        for (k, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::Validation(format!(
                    "covariate column {k} has length {}, expected {n}",
                    col.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidRow {
                    row: i + 1,
                    message: format!("non-finite value in covariate {k}"),
                });
            }
        }
        let treated = treatments.iter().filter(|&&w| w == 1).count();
        let marginal_p = treated as f64 / n as f64;
        let feature_names = (0..columns.len()).map(|k| format!("x{}", k + 1)).collect();
        let ds = CausalDataset {
            outcomes,
            treatments,
            columns,
            feature_names,
            propensity: None,
            true_cate: None,
            marginal_p,
        };
        Ok(ds)
    }

    /// Builds a dataset from row-major covariates.
    pub fn from_rows(outcomes: Vec<f64>, treatments: Vec<u8>, rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut columns = vec![Vec::with_capacity(rows.len()); k];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidRow {
                    row: i + 1,
                    message: format!("expected {k} covariates, got {}", row.len()),
                });
            }
            for (c, &v) in columns.iter_mut().zip(row) {
                c.push(v);
            }
        }
        Self::new(outcomes, treatments, columns)
    }

    pub fn with_marginal_p(mut self, p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Validation(format!("marginal treatment probability {p} outside (0,1)")));
        }
        self.marginal_p = p;
        Ok(self)
    }

    pub fn with_propensity(mut self, propensity: Vec<f64>) -> Result<Self> {
        if propensity.len() != self.len() {
            return Err(Error::Validation("propensity length does not match outcomes".into()));
        }
        if let Some(i) = propensity.iter().position(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::InvalidRow {
                row: i + 1,
                message: format!("propensity {} outside (0,1)", propensity[i]),
            });
        }
        self.propensity = Some(propensity);
        Ok(self)
    }

    pub fn with_true_cate(mut self, tau: Vec<f64>) -> Result<Self> {
        if tau.len() != self.len() {
            return Err(Error::Validation("true CATE length does not match outcomes".into()));
        }
        self.true_cate = Some(tau);
        Ok(self)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.columns.len() {
            return Err(Error::Validation(format!(
                "{} feature names given for {} covariates",
                names.len(),
                self.columns.len()
            )));
        }
        self.feature_names = names;
        Ok(self)
    }

    /// Fails unless the empirical share and the assumed `marginal_p` make sense.
    pub fn validate_marginal_p(&self) -> Result<()> {
        if !(self.marginal_p > 0.0 && self.marginal_p < 1.0) {
            return Err(Error::Validation(format!(
                "marginal treatment probability {} outside (0,1); both arms must be present",
                self.marginal_p
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn treatments(&self) -> &[u8] {
        &self.treatments
    }

    pub fn outcome(&self, i: usize) -> f64 {
        self.outcomes[i]
    }

    pub fn is_treated(&self, i: usize) -> bool {
        self.treatments[i] == 1
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.columns[k]
    }

    pub fn x(&self, i: usize, k: usize) -> f64 {
        self.columns[k][i]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn propensity(&self) -> Option<&[f64]> {
        self.propensity.as_deref()
    }

    pub fn true_cate(&self) -> Option<&[f64]> {
        self.true_cate.as_deref()
    }

    pub fn marginal_p(&self) -> f64 {
        self.marginal_p
    }

    /// Transformed outcome of unit `i`; its conditional mean given `X` is the CATE.
    pub fn transformed(&self, i: usize) -> f64 {
        let p = self.marginal_p;
        self.outcomes[i] * (f64::from(self.treatments[i]) - p) / (p * (1.0 - p))
    }

    /// Copies the listed rows into a new dataset, keeping `marginal_p`.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let pick = |v: &[f64]| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let mut ds = CausalDataset::new(
            pick(&self.outcomes),
            indices.iter().map(|&i| self.treatments[i]).collect(),
            self.columns.iter().map(|c| pick(c)).collect(),
        )?
        .with_feature_names(self.feature_names.clone())?;
        ds.marginal_p = self.marginal_p;
        ds.propensity = self.propensity.as_deref().map(pick);
        ds.true_cate = self.true_cate.as_deref().map(pick);
        Ok(ds)
    }

    pub fn count_treated(&self, indices: &[usize]) -> usize {
        indices.iter().filter(|&&i| self.treatments[i] == 1).count()
    }
}

/// `Y* = Y (W - p) / (p (1 - p))` for every unit.
pub fn transformed_outcome(dataset: &CausalDataset) -> Vec<f64> {
    (0..dataset.len()).map(|i| dataset.transformed(i)).collect()
}

/// Disjoint training, estimation and test index sets into a parent dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSplit {
    pub train: Vec<usize>,
    pub est: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

const SPLIT_ATTEMPTS: usize = 100;

/// Uniform random partition into train/est/test subsets of the given fractions.
///
/// Set sizes are `floor(fraction * N)`. The shuffle is redrawn (at most 100
/// times) until every nonempty set holds at least one treated and one control
/// unit.
pub fn split_sample(dataset: &CausalDataset, fractions: (f64, f64, f64), seed: u64) -> Result<SampleSplit> {
    let (ft, fe, fs) = fractions;
    for f in [ft, fe, fs] {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::Validation(format!("split fraction {f} outside [0,1]")));
        }
    }
    if ft + fe + fs > 1.0 + 1e-9 {
        return Err(Error::Validation(format!("split fractions sum to {} > 1", ft + fe + fs)));
    }
    let n = dataset.len();
    let size = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
    let sizes = [size(ft), size(fe), size(fs)];
    let treated = dataset.count_treated(&(0..n).collect::<Vec<_>>());
    let nonempty = sizes.iter().filter(|&&s| s > 0).count();
    if sizes.iter().any(|&s| s == 1) || treated < nonempty || n - treated < nonempty {
        return Err(Error::Validation(format!(
            "fractions {fractions:?} cannot give both arms to every requested set (N={n}, treated={treated})"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..SPLIT_ATTEMPTS {
        order.shuffle(&mut rng);
        let mut sets = Vec::with_capacity(3);
        let mut start = 0;
        for &s in &sizes {
            let mut set = order[start..start + s].to_vec();
            set.sort_unstable();
            start += s;
            sets.push(set);
        }
        let balanced = sets.iter().all(|set| {
            set.is_empty() || {
                let t = dataset.count_treated(set);
                t > 0 && t < set.len()
            }
        });
        if balanced {
            let test = sets.pop().unwrap_or_default();
            let est = sets.pop().unwrap_or_default();
            let train = sets.pop().unwrap_or_default();
            return Ok(SampleSplit { train, est, test, seed });
        }
    }
    Err(Error::Support(format!(
        "no split with both arms in every set after {SPLIT_ATTEMPTS} attempts"
    )))
}

/// Column mapping for CSV ingestion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub outcome: String,
    pub treatment: String,
    /// Covariate columns; empty means every column not otherwise mapped.
    pub covariates: Vec<String>,
    pub propensity: Option<String>,
    pub true_cate: Option<String>,
    /// Overrides the empirical treated share.
    pub marginal_p: Option<f64>,
}

impl CsvSchema {
    pub fn new(outcome: &str, treatment: &str) -> Self {
        CsvSchema {
            outcome: outcome.to_string(),
            treatment: treatment.to_string(),
            ..Default::default()
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<CausalDataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, schema)
}

/// Parses a headed, comma-delimited CSV stream. Row numbers in errors count
/// data rows from 1 (the header is not counted).
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<CausalDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let position: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
    let find = |name: &str| position.get(name).copied().ok_or_else(|| Error::MissingColumn(name.to_string()));

    let y_col = find(&schema.outcome)?;
    let w_col = find(&schema.treatment)?;
    let e_col = schema.propensity.as_deref().map(find).transpose()?;
    let tau_col = schema.true_cate.as_deref().map(find).transpose()?;
    let cov_names: Vec<String> = if schema.covariates.is_empty() {
        headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != y_col && *i != w_col && Some(*i) != e_col && Some(*i) != tau_col)
            .map(|(_, h)| h.clone())
            .collect()
    } else {
        schema.covariates.clone()
    };
    if cov_names.is_empty() {
        return Err(Error::Validation("no covariate columns".into()));
    }
    let cov_cols = cov_names.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;

    let mut outcomes = Vec::new();
    let mut treatments = Vec::new();
    let mut columns = vec![Vec::new(); cov_cols.len()];
    let mut propensity = e_col.map(|_| Vec::new());
    let mut tau = tau_col.map(|_| Vec::new());

    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record?;
        let cell = |c: usize, what: &str| -> Result<f64> {
            let raw = record.get(c).unwrap_or("").trim();
            let v: f64 = raw.parse().map_err(|_| Error::InvalidRow {
                row,
                message: format!("cannot parse {what} value `{raw}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::InvalidRow { row, message: format!("non-finite {what} value") });
            }
            Ok(v)
        };
        outcomes.push(cell(y_col, &schema.outcome)?);
        let w = cell(w_col, &schema.treatment)?;
        if w != 0.0 && w != 1.0 {
            return Err(Error::InvalidRow { row, message: format!("treatment must be 0 or 1, got {w}") });
        }
        treatments.push(w as u8);
        for ((col, &c), name) in columns.iter_mut().zip(&cov_cols).zip(&cov_names) {
            col.push(cell(c, name)?);
        }
        if let (Some(c), Some(v)) = (e_col, propensity.as_mut()) {
            let e = cell(c, "propensity")?;
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::InvalidRow { row, message: format!("propensity {e} outside (0,1)") });
            }
            v.push(e);
        }
        if let (Some(c), Some(v)) = (tau_col, tau.as_mut()) {
            v.push(cell(c, "true_cate")?);
        }
    }

    let mut ds = CausalDataset::new(outcomes, treatments, columns)?.with_feature_names(cov_names)?;
    if let Some(e) = propensity {
        ds = ds.with_propensity(e)?;
    }
    if let Some(t) = tau {
        ds = ds.with_true_cate(t)?;
    }
    match schema.marginal_p {
        Some(p) => ds.with_marginal_p(p),
        None => {
            ds.validate_marginal_p()?;
            Ok(ds)
        }
    }
}

/// Reads the named covariate columns, in the given order, as rows. Columns
/// that are not requested are ignored.
pub fn read_covariates<R: Read>(reader: R, names: &[String]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let cols = names
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h == n)
                .ok_or_else(|| Error::Schema(format!("covariate `{n}` used by the model is not in the input")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = cols
            .iter()
            .zip(names)
            .map(|(&c, name)| {
                let raw = record.get(c).unwrap_or("").trim();
                match raw.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(Error::InvalidRow { row: r + 1, message: format!("cannot parse {name} value `{raw}`") }),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Writes `y`, `w`, the covariates and, when present, `propensity` and `tau`.
pub fn write_csv<W: std::io::Write>(dataset: &CausalDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["y".to_string(), "w".to_string()];
    header.extend(dataset.feature_names().iter().cloned());
    if dataset.propensity().is_some() {
        header.push("propensity".into());
    }
    if dataset.true_cate().is_some() {
        header.push("tau".into());
    }
    w.write_record(&header)?;
    for i in 0..dataset.len() {
        let mut rec = vec![dataset.outcome(i).to_string(), dataset.treatments()[i].to_string()];
        rec.extend((0..dataset.n_features()).map(|k| dataset.x(i, k).to_string()));
        if let Some(e) = dataset.propensity() {
            rec.push(e[i].to_string());
        }
        if let Some(t) = dataset.true_cate() {
            rec.push(t[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
