//! Experiment configuration: declarative grid files, expansion into cells
//! and canonical fingerprints.
//!
//! A grid file is a TOML document listing the values of every experimental
//! dimension; expansion takes the cartesian product, drops infeasible cells
//! with a logged reason and resolves datasets once per resample seed. Each
//! cell serializes canonically to JSON; its SHA-256 is the cell identity in
//! the result store.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    load_csv, resample, CsvSchema, Dataset, PoolStrategy, SplitStrategy,
};
use crate::error::{Error, Result};
use crate::kernel::GammaHeuristic;
use crate::learners::Learner;
use crate::metrics::MetricKind;
use crate::strategies::{feasibility_gate, PxSupport, ScenarioFacts, StrategyKind};

/// How the cost parameters are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum CostSpec {
    /// `c = c1 = c2 = 1 / (n_train * expected_outlier_fraction)`, clamped.
    Tax { expected_outlier_fraction: f64 },
    /// Explicit costs.
    Fixed { c1: f64, c2: f64 },
}

/// Per-strategy parameter overrides; unset fields fall back to defaults
/// (`prior_inlier` falls back to the dataset's true inlier share).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct StrategyParams {
    pub prior_inlier: Option<f64>,
    pub eta_nb: Option<f64>,
    pub k_nn: Option<usize>,
    pub eta_bnc: Option<f64>,
    pub p_bnc: Option<f64>,
    pub px_support: Option<PxSupport>,
}

/// One cell of the experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset_path: String,
    pub dataset_name: String,
    pub resample_seed: u64,
    pub outlier_rate: f64,
    pub max_n: usize,
    pub pool: PoolStrategy,
    pub split: SplitStrategy,
    pub train_fraction: Option<f64>,
    pub learner: Learner,
    pub cost: CostSpec,
    pub kappa: f64,
    pub gamma: GammaHeuristic,
    pub strategy: StrategyKind,
    pub strategy_params: StrategyParams,
    pub metrics: Vec<String>,
    pub budget: usize,
    pub seed: u64,
    pub oracle_noise: f64,
}

impl ExperimentConfig {
    /// Canonical serialization used for hashing and replay comparison.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Stable identity of this cell: SHA-256 of the canonical form.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_json().as_bytes());
        hex::encode(hasher.finalize())
    }

    /// Config field value by name, for grouping in summaries.
    pub fn field(&self, name: &str) -> Option<String> {
        match name {
            "dataset" => Some(self.dataset_name.clone()),
            "resample_seed" => Some(self.resample_seed.to_string()),
            "pool" => Some(self.pool.name().to_string()),
            "split" => Some(self.split.name().to_string()),
            "learner" => Some(match self.learner {
                Learner::Ssad => format!("ssad_{}", self.kappa),
                l => l.name().to_string(),
            }),
            "gamma" => Some(self.gamma.name()),
            "strategy" => Some(self.strategy.name().to_string()),
            "seed" => Some(self.seed.to_string()),
            "kappa" => Some(self.kappa.to_string()),
            _ => None,
        }
    }

    pub fn parsed_metrics(&self) -> Result<Vec<MetricKind>> {
        self.metrics.iter().map(|m| m.parse()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.outlier_rate > 0.0 && self.outlier_rate < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "outlier_rate must lie in (0, 1), got {}",
                self.outlier_rate
            )));
        }
        if self.metrics.is_empty() {
            return Err(Error::InvalidConfig("no metrics configured".into()));
        }
        self.parsed_metrics()?;
        if self.kappa < 0.0 {
            return Err(Error::InvalidConfig("kappa must be nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.oracle_noise) {
            return Err(Error::InvalidConfig(
                "oracle_noise must lie in [0, 1)".into(),
            ));
        }
        match self.cost {
            CostSpec::Tax {
                expected_outlier_fraction,
            } => {
                if !(expected_outlier_fraction > 0.0 && expected_outlier_fraction < 1.0) {
                    return Err(Error::InvalidConfig(
                        "expected_outlier_fraction must lie in (0, 1)".into(),
                    ));
                }
            }
            CostSpec::Fixed { c1, c2 } => {
                if !(c1 > 0.0 && c2 > 0.0) {
                    return Err(Error::InvalidConfig("costs must be positive".into()));
                }
            }
        }
        if self.split == SplitStrategy::Sh {
            let f = self.train_fraction.ok_or_else(|| {
                Error::InvalidConfig("sh split requires train_fraction".into())
            })?;
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidConfig(
                    "train_fraction must lie in (0, 1)".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Declarative grid document (TOML).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<String>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_outlier_rate")]
    pub outlier_rate: f64,
    #[serde(default = "default_max_n")]
    pub max_n: usize,
    #[serde(default)]
    pub oracle_noise: f64,
    pub datasets: Vec<DatasetSpec>,
    pub pools: Vec<PoolSpec>,
    pub splits: Vec<SplitSpec>,
    pub learners: Vec<LearnerSpec>,
    pub gammas: Vec<GammaSpec>,
    pub strategies: Vec<StrategySpec>,
}

fn default_budget() -> usize {
    50
}
fn default_metrics() -> Vec<String> {
    vec!["mcc".into()]
}
fn default_seeds() -> Vec<u64> {
    vec![1]
}
fn default_outlier_rate() -> f64 {
    0.05
}
fn default_max_n() -> usize {
    1000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub path: String,
    #[serde(default = "default_seeds")]
    pub resample_seeds: Vec<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSpec {
    pub strategy: String,
    pub param: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub strategy: String,
    pub train_fraction: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSpec {
    pub name: String,
    #[serde(default)]
    pub kappa: f64,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaSpec {
    pub heuristic: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    pub name: String,
    pub prior_inlier: Option<f64>,
    pub eta_nb: Option<f64>,
    pub k_nn: Option<usize>,
    pub eta_bnc: Option<f64>,
    pub p_bnc: Option<f64>,
    pub px_support: Option<PxSupport>,
}

/// Parse a grid document. Exposed separately so untrusted input can be
/// exercised directly.
pub fn parse_grid(content: &str) -> Result<GridSpec> {
    let spec: GridSpec = toml::from_str(content)?;
    if spec.datasets.is_empty()
        || spec.pools.is_empty()
        || spec.splits.is_empty()
        || spec.learners.is_empty()
        || spec.gammas.is_empty()
        || spec.strategies.is_empty()
    {
        return Err(Error::InvalidConfig(
            "every grid dimension needs at least one entry".into(),
        ));
    }
    Ok(spec)
}

fn parse_pool(spec: &PoolSpec) -> Result<PoolStrategy> {
    match spec.strategy.as_str() {
        "pu" => Ok(PoolStrategy::Pu),
        "pa" => Ok(PoolStrategy::Pa),
        "pp" => {
            let p = spec.param.ok_or_else(|| {
                Error::InvalidConfig("pool pp needs a fraction param".into())
            })?;
            Ok(PoolStrategy::Pp(p))
        }
        "pn" => {
            let n = spec.param.ok_or_else(|| {
                Error::InvalidConfig("pool pn needs a count param".into())
            })?;
            if n < 1.0 || n.fract() != 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "pool pn param must be a positive integer, got {n}"
                )));
            }
            Ok(PoolStrategy::Pn(n as usize))
        }
        other => Err(Error::UnknownName {
            kind: "pool",
            name: other.into(),
        }),
    }
}

/// Grid expansion output: runnable cells, exclusions with reasons and the
/// shared resampled datasets.
pub struct PreparedGrid {
    pub cells: Vec<ExperimentConfig>,
    pub excluded: Vec<(ExperimentConfig, String)>,
    pub datasets: BTreeMap<(String, u64), Arc<Dataset>>,
}

/// Expand a grid spec into feasible experiment cells.
///
/// Dataset paths resolve relative to `base_dir`. Cells that fail the
/// scenario rules are returned in `excluded` together with the reason;
/// malformed specs are hard errors.
pub fn expand_grid(spec: &GridSpec, base_dir: &Path) -> Result<PreparedGrid> {
    let mut datasets: BTreeMap<(String, u64), Arc<Dataset>> = BTreeMap::new();
    for ds in &spec.datasets {
        let path = base_dir.join(&ds.path);
        let raw = load_csv(&path, &CsvSchema::default())?;
        for &seed in &ds.resample_seeds {
            let resampled = resample(&raw, spec.outlier_rate, spec.max_n, seed)?;
            datasets.insert((ds.path.clone(), seed), Arc::new(resampled));
        }
    }

    let mut cells = Vec::new();
    let mut excluded = Vec::new();
    for ds in &spec.datasets {
        for &resample_seed in &ds.resample_seeds {
            let data = &datasets[&(ds.path.clone(), resample_seed)];
            for pool_spec in &spec.pools {
                let pool = parse_pool(pool_spec)?;
                for split_spec in &spec.splits {
                    let split: SplitStrategy = split_spec.strategy.parse()?;
                    for learner_spec in &spec.learners {
                        let learner: Learner = learner_spec.name.parse()?;
                        for gamma_spec in &spec.gammas {
                            let gamma: GammaHeuristic = gamma_spec.heuristic.parse()?;
                            for strategy_spec in &spec.strategies {
                                let strategy: StrategyKind = strategy_spec.name.parse()?;
                                for &seed in &spec.seeds {
                                    let cfg = build_cell(
                                        spec,
                                        ds,
                                        resample_seed,
                                        data,
                                        pool,
                                        split,
                                        split_spec,
                                        learner,
                                        learner_spec,
                                        gamma,
                                        strategy,
                                        strategy_spec,
                                        seed,
                                    );
                                    cfg.validate()?;
                                    match check_cell(&cfg, data) {
                                        Ok(()) => cells.push(cfg),
                                        Err(Error::InfeasibleScenario(reason)) => {
                                            excluded.push((cfg, reason));
                                        }
                                        Err(e) => return Err(e),
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(PreparedGrid {
        cells,
        excluded,
        datasets,
    })
}

#[allow(clippy::too_many_arguments)]
fn build_cell(
    spec: &GridSpec,
    ds: &DatasetSpec,
    resample_seed: u64,
    data: &Dataset,
    pool: PoolStrategy,
    split: SplitStrategy,
    split_spec: &SplitSpec,
    learner: Learner,
    learner_spec: &LearnerSpec,
    gamma: GammaHeuristic,
    strategy: StrategyKind,
    strategy_spec: &StrategySpec,
    seed: u64,
) -> ExperimentConfig {
    let cost = match (learner_spec.c1, learner_spec.c2) {
        (Some(c1), c2) => CostSpec::Fixed {
            c1,
            c2: c2.unwrap_or(c1),
        },
        _ => CostSpec::Tax {
            expected_outlier_fraction: spec.outlier_rate,
        },
    };
    ExperimentConfig {
        dataset_path: ds.path.clone(),
        dataset_name: data.name.clone(),
        resample_seed,
        outlier_rate: spec.outlier_rate,
        max_n: spec.max_n,
        pool,
        split,
        train_fraction: split_spec.train_fraction,
        learner,
        cost,
        kappa: learner_spec.kappa,
        gamma,
        strategy,
        strategy_params: StrategyParams {
            prior_inlier: strategy_spec.prior_inlier,
            eta_nb: strategy_spec.eta_nb,
            k_nn: strategy_spec.k_nn,
            eta_bnc: strategy_spec.eta_bnc,
            p_bnc: strategy_spec.p_bnc,
            px_support: strategy_spec.px_support,
        },
        metrics: spec.metrics.clone(),
        budget: spec.budget,
        seed,
        oracle_noise: spec.oracle_noise,
    }
}

/// Scenario rules for one cell against its resolved dataset.
pub fn check_cell(cfg: &ExperimentConfig, data: &Dataset) -> Result<()> {
    let (l_in, l_out) = cfg.pool.initial_counts(data)?;
    let facts = ScenarioFacts {
        labeled_inliers: l_in,
        labeled_outliers: l_out,
        attributes: data.m(),
        pool_unlabeled: matches!(cfg.pool, PoolStrategy::Pu),
    };
    feasibility_gate(cfg.strategy, &facts, cfg.split, cfg.learner)?;
    let pool_size = l_in + l_out;
    if cfg.budget + pool_size > data.n() {
        return Err(Error::InfeasibleScenario(format!(
            "budget {} plus initial pool {} exceeds the {} observations",
            cfg.budget,
            pool_size,
            data.n()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn demo_csv(dir: &Path, rows: usize) -> String {
        let path = dir.join("demo.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "a,b,label").unwrap();
        for i in 0..rows {
            let v = i as f64 / rows as f64;
            let label = if i % 10 == 9 { "outlier" } else { "inlier" };
            writeln!(f, "{},{},{}", v, (v * 9.7).sin(), label).unwrap();
        }
        "demo.csv".into()
    }

    fn demo_grid(csv: &str) -> String {
        format!(
            r#"
budget = 5
metrics = ["mcc"]
seeds = [1]
outlier_rate = 0.1
max_n = 100

[[datasets]]
path = "{csv}"
resample_seeds = [1]

[[pools]]
strategy = "pu"

[[pools]]
strategy = "pn"
param = 10

[[splits]]
strategy = "sf"

[[splits]]
strategy = "si"

[[learners]]
name = "svddneg"

[[gammas]]
heuristic = "scott"

[[strategies]]
name = "db"

[[strategies]]
name = "mm"
"#
        )
    }

    #[test]
    fn grid_round_trips_and_expands() {
        let dir = tempfile::tempdir().unwrap();
        let csv = demo_csv(dir.path(), 100);
        let spec = parse_grid(&demo_grid(&csv)).unwrap();
        let grid = expand_grid(&spec, dir.path()).unwrap();
        // 2 pools x 2 splits x 2 strategies = 8 raw cells
        assert_eq!(grid.cells.len() + grid.excluded.len(), 8);
        // pu x si excluded twice (both strategies), pu x mm excluded on sf,
        // pn x mm feasible only if 10 labeled inliers >= 2 attributes
        assert!(grid
            .excluded
            .iter()
            .any(|(c, reason)| matches!(c.pool, PoolStrategy::Pu)
                && c.split == SplitStrategy::Si
                && reason.contains("pu")));
        assert!(grid
            .excluded
            .iter()
            .any(|(c, reason)| matches!(c.pool, PoolStrategy::Pu)
                && c.strategy == StrategyKind::Mm
                && c.split == SplitStrategy::Sf
                && reason.contains("labeled inliers")));
    }

    #[test]
    fn expansion_never_emits_a_gated_cell() {
        let dir = tempfile::tempdir().unwrap();
        let csv = demo_csv(dir.path(), 100);
        let spec = parse_grid(&demo_grid(&csv)).unwrap();
        let grid = expand_grid(&spec, dir.path()).unwrap();
        for cell in &grid.cells {
            let data = &grid.datasets[&(cell.dataset_path.clone(), cell.resample_seed)];
            assert!(check_cell(cell, data).is_ok());
        }
    }

    #[test]
    fn fingerprint_is_stable_and_seed_sensitive() {
        let dir = tempfile::tempdir().unwrap();
        let csv = demo_csv(dir.path(), 100);
        let spec = parse_grid(&demo_grid(&csv)).unwrap();
        let grid = expand_grid(&spec, dir.path()).unwrap();
        let a = &grid.cells[0];
        assert_eq!(a.fingerprint(), a.fingerprint());
        let mut b = a.clone();
        b.seed += 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
        // canonical form round-trips
        let parsed: ExperimentConfig = serde_json::from_str(&a.canonical_json()).unwrap();
        assert_eq!(&parsed, a);
        assert_eq!(parsed.fingerprint(), a.fingerprint());
    }

    #[test]
    fn malformed_grid_is_rejected() {
        assert!(parse_grid("budget = []").is_err());
        assert!(parse_grid("").is_err());
        let no_dim = r#"
[[datasets]]
path = "x.csv"
"#;
        assert!(parse_grid(no_dim).is_err());
    }
}
