//! Datasets, label pools and train/test splits.
//!
//! Datasets are min-max normalized to [0, 1] per column and cleaned from
//! duplicate rows at load time. Resampling fixes the outlier share and caps
//! the size, the usual preprocessing for outlier-detection benchmarks.

use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Ground-truth class of an observation. Outliers are the minority class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Inlier,
    Outlier,
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inlier" | "in" | "0" => Ok(Label::Inlier),
            "outlier" | "out" | "1" => Ok(Label::Outlier),
            other => Err(Error::InvalidDataset(format!(
                "unrecognized label value `{other}`"
            ))),
        }
    }
}

/// Observations with ground-truth labels and provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub x: Matrix,
    pub y: Vec<Label>,
    /// Seed of the resampling step that produced this dataset, if any.
    pub seed: Option<u64>,
    /// Human-readable notes accumulated by loading and resampling.
    pub provenance: Vec<String>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, x: Matrix, y: Vec<Label>) -> Result<Self> {
        if x.rows() == 0 || x.cols() == 0 {
            return Err(Error::InvalidDataset(
                "dataset must have at least one row and one column".into(),
            ));
        }
        if y.len() != x.rows() {
            return Err(Error::InvalidDataset(format!(
                "{} labels for {} rows",
                y.len(),
                x.rows()
            )));
        }
        Ok(Self {
            name: name.into(),
            x,
            y,
            seed: None,
            provenance: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn m(&self) -> usize {
        self.x.cols()
    }

    pub fn outlier_count(&self) -> usize {
        self.y.iter().filter(|l| **l == Label::Outlier).count()
    }

    pub fn inlier_count(&self) -> usize {
        self.n() - self.outlier_count()
    }

    pub fn outlier_fraction(&self) -> f64 {
        self.outlier_count() as f64 / self.n() as f64
    }
}

/// Column spec for the CSV loader.
///
/// The default expects a header row, decimal feature columns and a final
/// column named `label` holding `inlier`/`outlier` (or `0`/`1`).
#[derive(Debug, Clone, Default)]
pub struct CsvSchema {
    /// Name of the label column; defaults to `label`.
    pub label_column: Option<String>,
}

/// Load a dataset from a CSV file, normalize and de-duplicate it.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    load_csv_reader(file, &name, schema)
}

/// Loader core over any byte source; used directly by fuzz targets.
pub fn load_csv_reader(reader: impl Read, name: &str, schema: &CsvSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr
        .headers()
        .map_err(|e| Error::CsvParse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let label_name = schema.label_column.as_deref().unwrap_or("label");
    let label_col = headers
        .iter()
        .position(|h| h == label_name)
        .ok_or_else(|| Error::InvalidDataset(format!("no `{label_name}` column in header")))?;
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|c| *c != label_col).collect();
    if feature_cols.is_empty() {
        return Err(Error::InvalidDataset("no feature columns".into()));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<Label> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::CsvParse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(Error::CsvParse {
                line,
                message: format!("expected {} fields, got {}", headers.len(), record.len()),
            });
        }
        let mut row = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            let field = &record[c];
            if field.is_empty() {
                return Err(Error::CsvParse {
                    line,
                    message: format!("missing value in column `{}`", &headers[c]),
                });
            }
            let value: f64 = field.parse().map_err(|_| Error::CsvParse {
                line,
                message: format!("`{field}` is not a decimal number"),
            })?;
            if !value.is_finite() {
                return Err(Error::CsvParse {
                    line,
                    message: format!("non-finite value `{field}`"),
                });
            }
            row.push(value);
        }
        labels.push(record[label_col].parse().map_err(|e| Error::CsvParse {
            line,
            message: format!("{e}"),
        })?);
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidDataset("no data rows".into()));
    }

    let mut x = Matrix::from_rows(&rows)?;
    let constant_cols = normalize_columns(&mut x);
    let (x, labels, removed) = deduplicate(x, labels);

    let mut dataset = Dataset::new(name, x, labels)?;
    for c in &constant_cols {
        dataset
            .provenance
            .push(format!("constant column {c} normalized to zeros"));
    }
    if removed > 0 {
        dataset
            .provenance
            .push(format!("removed {removed} duplicate rows"));
    }
    Ok(dataset)
}

/// Min-max normalize every column to [0, 1] in place.
///
/// Constant columns are mapped to all zeros; their indices are returned so
/// callers can surface a warning.
pub fn normalize_columns(x: &mut Matrix) -> Vec<usize> {
    let (n, m) = (x.rows(), x.cols());
    let mut constant = Vec::new();
    for j in 0..m {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            lo = lo.min(x.get(i, j));
            hi = hi.max(x.get(i, j));
        }
        if hi > lo {
            let span = hi - lo;
            for i in 0..n {
                x.set(i, j, (x.get(i, j) - lo) / span);
            }
        } else {
            constant.push(j);
            for i in 0..n {
                x.set(i, j, 0.0);
            }
        }
    }
    constant
}

/// Remove duplicate rows, comparing normalized values rounded to 12 decimal
/// digits. The first occurrence wins.
fn deduplicate(x: Matrix, y: Vec<Label>) -> (Matrix, Vec<Label>, usize) {
    let mut seen = std::collections::HashSet::new();
    let mut keep_rows: Vec<Vec<f64>> = Vec::new();
    let mut keep_labels = Vec::new();
    for i in 0..x.rows() {
        let key: Vec<u64> = x
            .row(i)
            .iter()
            .map(|v| ((v * 1e12).round() as i64) as u64)
            .collect();
        if seen.insert(key) {
            keep_rows.push(x.row(i).to_vec());
            keep_labels.push(y[i]);
        }
    }
    let removed = x.rows() - keep_rows.len();
    let x = Matrix::from_rows(&keep_rows).expect("rows share a width");
    (x, keep_labels, removed)
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

/// `round_half_up(count * num / den)` in exact integer arithmetic.
fn round_half_up_ratio(count: usize, num: usize, den: usize) -> usize {
    if den == 0 {
        return 0;
    }
    let a = 2 * (count as u128) * (num as u128) + den as u128;
    (a / (2 * den as u128)) as usize
}

/// Stratum sizes for a stratified sample of `n` observations whose outlier
/// share matches `n_out_total / n_total`, rounding the outlier stratum half
/// up and giving the remainder to inliers, capped by availability.
pub fn stratified_counts(n: usize, n_out_total: usize, n_total: usize) -> (usize, usize) {
    let n = n.min(n_total);
    let n_in_total = n_total - n_out_total;
    let mut n_out = round_half_up_ratio(n, n_out_total, n_total).min(n_out_total);
    let mut n_in = n - n_out;
    if n_in > n_in_total {
        n_in = n_in_total;
        n_out = n - n_in;
    }
    (n_in, n_out)
}

/// Downsample to at most `max_n` observations at the requested outlier rate.
///
/// Deterministic in `seed`. When the dataset does not hold enough outliers
/// to reach the rate at full size, all available outliers are kept, the
/// inlier stratum shrinks to preserve the rate and a warning is recorded.
pub fn resample(d: &Dataset, outlier_rate: f64, max_n: usize, seed: u64) -> Result<Dataset> {
    if !(outlier_rate > 0.0 && outlier_rate < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "outlier rate must lie in (0, 1), got {outlier_rate}"
        )));
    }
    if max_n == 0 {
        return Err(Error::InvalidParameter("max_n must be at least 1".into()));
    }
    let inliers: Vec<usize> = (0..d.n()).filter(|&i| d.y[i] == Label::Inlier).collect();
    let outliers: Vec<usize> = (0..d.n()).filter(|&i| d.y[i] == Label::Outlier).collect();
    if inliers.is_empty() || outliers.is_empty() {
        return Err(Error::InvalidDataset(
            "resampling needs at least one inlier and one outlier".into(),
        ));
    }

    let cap = max_n.min(d.n());
    let mut n_out = round_half_up(outlier_rate * cap as f64);
    let mut n_in = cap - n_out;
    let mut warning = None;
    if n_in > inliers.len() {
        n_in = inliers.len();
        n_out = round_half_up(n_in as f64 * outlier_rate / (1.0 - outlier_rate)).min(outliers.len());
    }
    if n_out > outliers.len() {
        n_out = outliers.len();
        n_in = round_half_up(n_out as f64 * (1.0 - outlier_rate) / outlier_rate).min(inliers.len());
        warning = Some(format!(
            "only {n_out} outliers available for rate {outlier_rate}; total shrunk to {}",
            n_in + n_out
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected = sample_without_replacement(&inliers, n_in, &mut rng);
    selected.extend(sample_without_replacement(&outliers, n_out, &mut rng));
    selected.sort_unstable();

    let x = d.x.select_rows(&selected);
    let y: Vec<Label> = selected.iter().map(|&i| d.y[i]).collect();
    let mut out = Dataset::new(d.name.clone(), x, y)?;
    out.seed = Some(seed);
    out.provenance = d.provenance.clone();
    out.provenance.push(format!(
        "resampled to {} observations at rate {outlier_rate} with seed {seed}",
        out.n()
    ));
    if let Some(w) = warning {
        out.provenance.push(format!("warning: {w}"));
    }
    Ok(out)
}

fn sample_without_replacement(
    pool: &[usize],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut indices: Vec<usize> = pool.to_vec();
    indices.shuffle(rng);
    indices.truncate(count);
    indices
}

/// Label status of one observation within a pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelStatus {
    Unlabeled,
    LabeledInlier,
    LabeledOutlier,
}

/// Per-observation label bookkeeping.
///
/// The status vector partitions the dataset into the unlabeled set and the
/// labeled inliers/outliers. Labels are only ever added, never removed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolState {
    status: Vec<LabelStatus>,
}

impl PoolState {
    pub fn new(n: usize) -> Self {
        Self {
            status: vec![LabelStatus::Unlabeled; n],
        }
    }

    pub fn len(&self) -> usize {
        self.status.len()
    }

    pub fn is_empty(&self) -> bool {
        self.status.is_empty()
    }

    pub fn status(&self, i: usize) -> LabelStatus {
        self.status[i]
    }

    pub fn is_unlabeled(&self, i: usize) -> bool {
        self.status[i] == LabelStatus::Unlabeled
    }

    /// Record an oracle answer. Labels are permanent for the whole run.
    pub fn assign(&mut self, i: usize, label: Label) -> Result<()> {
        if self.status[i] != LabelStatus::Unlabeled {
            return Err(Error::InvalidParameter(format!(
                "observation {i} is already labeled"
            )));
        }
        self.status[i] = match label {
            Label::Inlier => LabelStatus::LabeledInlier,
            Label::Outlier => LabelStatus::LabeledOutlier,
        };
        Ok(())
    }

    pub fn unlabeled(&self) -> Vec<usize> {
        self.filter(LabelStatus::Unlabeled)
    }

    pub fn labeled_inliers(&self) -> Vec<usize> {
        self.filter(LabelStatus::LabeledInlier)
    }

    pub fn labeled_outliers(&self) -> Vec<usize> {
        self.filter(LabelStatus::LabeledOutlier)
    }

    pub fn labeled_count(&self) -> usize {
        self.status
            .iter()
            .filter(|s| **s != LabelStatus::Unlabeled)
            .count()
    }

    fn filter(&self, wanted: LabelStatus) -> Vec<usize> {
        self.status
            .iter()
            .enumerate()
            .filter_map(|(i, s)| (*s == wanted).then_some(i))
            .collect()
    }
}

/// Initial pool strategies.
///
/// `Pu` starts from scratch, `Pp`/`Pn` draw a stratified sample (a fraction
/// of the data or a fixed count), `Pa` labels as many inliers as there are
/// attributes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", content = "param", rename_all = "lowercase")]
pub enum PoolStrategy {
    Pu,
    Pp(f64),
    Pn(usize),
    Pa,
}

impl PoolStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            PoolStrategy::Pu => "pu",
            PoolStrategy::Pp(_) => "pp",
            PoolStrategy::Pn(_) => "pn",
            PoolStrategy::Pa => "pa",
        }
    }

    /// Initial pool sizes (labeled inliers, labeled outliers) without
    /// sampling; used by the feasibility checks.
    pub fn initial_counts(&self, d: &Dataset) -> Result<(usize, usize)> {
        match self {
            PoolStrategy::Pu => Ok((0, 0)),
            PoolStrategy::Pp(p) => {
                if !(*p > 0.0 && *p < 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "pp fraction must lie in (0, 1), got {p}"
                    )));
                }
                let n = round_half_up(p * d.n() as f64);
                Ok(stratified_counts(n, d.outlier_count(), d.n()))
            }
            PoolStrategy::Pn(n) => {
                if *n == 0 || *n > d.n() {
                    return Err(Error::InvalidParameter(format!(
                        "pn count must lie in 1..=N, got {n}"
                    )));
                }
                Ok(stratified_counts(*n, d.outlier_count(), d.n()))
            }
            PoolStrategy::Pa => {
                if d.m() > d.inlier_count() {
                    return Err(Error::InfeasibleScenario(format!(
                        "pa needs {} labeled inliers but only {} inliers exist",
                        d.m(),
                        d.inlier_count()
                    )));
                }
                Ok((d.m(), 0))
            }
        }
    }
}

/// Build the initial pool for a dataset. Labels come from the ground truth.
pub fn make_initial_pool(d: &Dataset, strategy: PoolStrategy, seed: u64) -> Result<PoolState> {
    let (n_in, n_out) = strategy.initial_counts(d)?;
    let mut pool = PoolState::new(d.n());
    if n_in == 0 && n_out == 0 {
        return Ok(pool);
    }
    let inliers: Vec<usize> = (0..d.n()).filter(|&i| d.y[i] == Label::Inlier).collect();
    let outliers: Vec<usize> = (0..d.n()).filter(|&i| d.y[i] == Label::Outlier).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in sample_without_replacement(&inliers, n_in, &mut rng) {
        pool.assign(i, Label::Inlier)?;
    }
    for i in sample_without_replacement(&outliers, n_out, &mut rng) {
        pool.assign(i, Label::Outlier)?;
    }
    Ok(pool)
}

/// Train/test split strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitStrategy {
    /// Fit and query on a training split, evaluate on a disjoint holdout.
    Sh,
    /// Fit, query and evaluate on the full data (resubstitution).
    Sf,
    /// Like Sf, but fit on the currently labeled inliers only.
    Si,
}

impl SplitStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            SplitStrategy::Sh => "sh",
            SplitStrategy::Sf => "sf",
            SplitStrategy::Si => "si",
        }
    }
}

impl FromStr for SplitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sh" => Ok(SplitStrategy::Sh),
            "sf" => Ok(SplitStrategy::Sf),
            "si" => Ok(SplitStrategy::Si),
            _ => Err(Error::UnknownName {
                kind: "split",
                name: s.into(),
            }),
        }
    }
}

/// Resolved train/test index sets.
///
/// For `Si` the training set is dynamic (the labeled inliers at fit time),
/// so `train_idx` stays empty and [`SplitAssignment::fit_indices`] resolves
/// it against the current pool.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub strategy: SplitStrategy,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub train_fraction: Option<f64>,
}

impl SplitAssignment {
    /// Indices the learner is fitted on, given the current pool.
    pub fn fit_indices(&self, pool: &PoolState) -> Vec<usize> {
        match self.strategy {
            SplitStrategy::Si => pool.labeled_inliers(),
            _ => self.train_idx.clone(),
        }
    }

    /// Indices classification quality is evaluated on.
    pub fn eval_indices(&self) -> &[usize] {
        &self.test_idx
    }

    /// Indices the query strategy may select from, given the current pool.
    pub fn eligible_indices(&self, pool: &PoolState) -> Vec<usize> {
        match self.strategy {
            SplitStrategy::Sh => self
                .train_idx
                .iter()
                .copied()
                .filter(|&i| pool.is_unlabeled(i))
                .collect(),
            _ => pool.unlabeled(),
        }
    }
}

/// Build a split assignment. `Sh` is stratified by ground-truth class.
pub fn make_split(
    d: &Dataset,
    strategy: SplitStrategy,
    train_fraction: Option<f64>,
    seed: u64,
) -> Result<SplitAssignment> {
    let all: Vec<usize> = (0..d.n()).collect();
    match strategy {
        SplitStrategy::Sf => Ok(SplitAssignment {
            strategy,
            train_idx: all.clone(),
            test_idx: all,
            train_fraction: None,
        }),
        SplitStrategy::Si => Ok(SplitAssignment {
            strategy,
            train_idx: Vec::new(),
            test_idx: all,
            train_fraction: None,
        }),
        SplitStrategy::Sh => {
            let frac = train_fraction.ok_or_else(|| {
                Error::InvalidParameter("sh split requires a train fraction".into())
            })?;
            if !(frac > 0.0 && frac < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "train fraction must lie in (0, 1), got {frac}"
                )));
            }
            let target = round_half_up(frac * d.n() as f64).clamp(1, d.n() - 1);
            let inliers: Vec<usize> = (0..d.n()).filter(|&i| d.y[i] == Label::Inlier).collect();
            let outliers: Vec<usize> = (0..d.n()).filter(|&i| d.y[i] == Label::Outlier).collect();
            let (n_in, n_out) = stratified_counts(target, outliers.len(), d.n());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut train = sample_without_replacement(&inliers, n_in, &mut rng);
            train.extend(sample_without_replacement(&outliers, n_out, &mut rng));
            train.sort_unstable();
            let in_train: std::collections::HashSet<usize> = train.iter().copied().collect();
            let test: Vec<usize> = (0..d.n()).filter(|i| !in_train.contains(i)).collect();
            Ok(SplitAssignment {
                strategy,
                train_idx: train,
                test_idx: test,
                train_fraction: Some(frac),
            })
        }
    }
}
