//! Experiment orchestration: the feedback loop, grid execution, result
//! persistence, aggregation and plot-data emission.
//!
//! Each grid cell runs independently and writes its own files, so grid
//! workers never contend. Result files are byte-reproducible: re-running a
//! cell with the same config and seeds rewrites identical bytes. Wall-clock
//! timings are therefore kept out of the canonical result lines and go to a
//! sidecar file instead.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{CostSpec, ExperimentConfig, PreparedGrid};
use crate::data::{
    make_initial_pool, make_split, Dataset, Label, LabelStatus, PoolState, SplitStrategy,
};
use crate::error::{Error, Result};
use crate::kernel::{cost_tax, gram_matrix, CostConfig, GramMatrix, KernelConfig};
use crate::learners::{fit, FitOptions, TrainedModel};
use crate::metrics::{IterationRecord, MetricKind, ProgressCurve, SummaryStat};
use crate::strategies::{
    score, select_query, NeighborIndex, ScoreContext, StrategyConfig, StrategyKind,
};

/// Label source simulated from the ground truth; optional symmetric label
/// noise.
#[derive(Debug, Clone)]
pub struct Oracle {
    truth: Vec<Label>,
    noise_rate: f64,
}

impl Oracle {
    pub fn new(truth: Vec<Label>, noise_rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&noise_rate) {
            return Err(Error::InvalidParameter(format!(
                "noise rate must lie in [0, 1), got {noise_rate}"
            )));
        }
        Ok(Self { truth, noise_rate })
    }

    pub fn answer(&self, index: usize, rng: &mut ChaCha8Rng) -> Label {
        let truth = self.truth[index];
        if self.noise_rate > 0.0 && rng.gen::<f64>() < self.noise_rate {
            match truth {
                Label::Inlier => Label::Outlier,
                Label::Outlier => Label::Inlier,
            }
        } else {
            truth
        }
    }
}

/// Outcome of one experiment run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRecord {
    pub fingerprint: String,
    pub config: ExperimentConfig,
    pub curve: ProgressCurve,
    /// metric name -> summary name -> value, for the default summary set.
    pub summaries: BTreeMap<String, BTreeMap<String, f64>>,
    pub warnings: Vec<String>,
    /// Measured wall-clock per iteration; not part of the canonical record.
    pub timings_ms: Vec<f64>,
}

/// Deterministic per-purpose RNG stream seeds.
fn derive_seed(base: u64, stream: &str, t: u64) -> u64 {
    let mut h = base ^ 0x9e37_79b9_7f4a_7c15;
    for b in stream.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= t.wrapping_mul(0xd134_2543_de82_ef95);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

fn resolve_costs(cfg: &ExperimentConfig, fit_set_size: usize) -> Result<CostConfig> {
    let base = match cfg.cost {
        CostSpec::Tax {
            expected_outlier_fraction,
        } => cost_tax(fit_set_size.max(1), expected_outlier_fraction)?,
        CostSpec::Fixed { c1, c2 } => CostConfig::new(c1.min(1.0), c1, c2, 0.0)?,
    };
    base.with_kappa(cfg.kappa)
}

fn strategy_config(cfg: &ExperimentConfig, data: &Dataset) -> StrategyConfig {
    let defaults = StrategyConfig::default();
    let true_inlier_share = (1.0 - data.outlier_fraction()).clamp(1e-6, 1.0 - 1e-6);
    StrategyConfig {
        prior_inlier: cfg
            .strategy_params
            .prior_inlier
            .unwrap_or(true_inlier_share),
        eta_nb: cfg.strategy_params.eta_nb.unwrap_or(defaults.eta_nb),
        k_nn: cfg.strategy_params.k_nn.unwrap_or(defaults.k_nn),
        eta_bnc: cfg.strategy_params.eta_bnc.unwrap_or(defaults.eta_bnc),
        p_bnc: cfg.strategy_params.p_bnc.unwrap_or(defaults.p_bnc),
        px_support: cfg
            .strategy_params
            .px_support
            .unwrap_or(defaults.px_support),
    }
}

struct FitOutput {
    model: TrainedModel,
    /// Decision values over all dataset rows.
    decision: Vec<f64>,
}

/// Solver state snapshot persisted per iteration when auditing is on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelAudit {
    pub t: usize,
    pub alpha: Vec<f64>,
    pub signs: Vec<f64>,
    pub radius_sq: f64,
    pub margin: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub costs: CostConfig,
    pub kkt_residual: f64,
}

impl ModelAudit {
    fn from_model(t: usize, model: &TrainedModel) -> Self {
        Self {
            t,
            alpha: model.alpha.clone(),
            signs: model.signs.clone(),
            radius_sq: model.radius_sq,
            margin: model.margin,
            kappa: model.costs.kappa,
            gamma: model.kernel.gamma,
            costs: model.costs,
            kkt_residual: model.kkt_residual,
        }
    }
}

fn fit_current(
    cfg: &ExperimentConfig,
    data: &Dataset,
    gram: &GramMatrix,
    kernel: KernelConfig,
    costs: CostConfig,
    split: &crate::data::SplitAssignment,
    pool: &PoolState,
) -> Result<FitOutput> {
    let fit_idx = split.fit_indices(pool);
    if fit_idx.is_empty() {
        return Err(Error::InfeasibleScenario(
            "training set is empty at fit time".into(),
        ));
    }
    // Under the inlier-only split the training set is homogeneous by
    // construction and all learners collapse to the unsupervised ball, so
    // the labels are not passed through.
    let status: Vec<LabelStatus> = if cfg.split == SplitStrategy::Si {
        vec![LabelStatus::Unlabeled; fit_idx.len()]
    } else {
        fit_idx.iter().map(|&i| pool.status(i)).collect()
    };
    let model = fit(
        cfg.learner,
        gram,
        &fit_idx,
        &status,
        kernel,
        costs,
        &FitOptions::default(),
    )?;
    let all: Vec<usize> = (0..data.n()).collect();
    let decision = model.decision_values_indexed(gram, &all);
    Ok(FitOutput { model, decision })
}

fn evaluate(
    metrics: &[MetricKind],
    decision: &[f64],
    data: &Dataset,
    eval_idx: &[usize],
) -> BTreeMap<String, Option<f64>> {
    let scores: Vec<f64> = eval_idx.iter().map(|&i| decision[i]).collect();
    let truth: Vec<Label> = eval_idx.iter().map(|&i| data.y[i]).collect();
    metrics
        .iter()
        .map(|m| (m.name(), m.evaluate(&scores, &truth)))
        .collect()
}

/// Execute one experiment cell: build pools and split, fit, then iterate
/// query -> oracle -> update -> refit -> evaluate until the budget is
/// spent. Deterministic given the config (seeds included).
pub fn run_experiment(cfg: &ExperimentConfig, data: &Dataset) -> Result<ResultRecord> {
    run_experiment_inner(cfg, data, &mut None)
}

/// Like [`run_experiment`], additionally capturing a per-iteration solver
/// audit.
pub fn run_experiment_audited(
    cfg: &ExperimentConfig,
    data: &Dataset,
) -> Result<(ResultRecord, Vec<ModelAudit>)> {
    let mut audits = Some(Vec::new());
    let record = run_experiment_inner(cfg, data, &mut audits)?;
    Ok((record, audits.unwrap()))
}

fn run_experiment_inner(
    cfg: &ExperimentConfig,
    data: &Dataset,
    audits: &mut Option<Vec<ModelAudit>>,
) -> Result<ResultRecord> {
    cfg.validate()?;
    crate::config::check_cell(cfg, data)?;
    let metrics = cfg.parsed_metrics()?;

    let gamma = cfg.gamma.resolve(&data.x)?;
    let kernel = KernelConfig::new(gamma)?;
    let gram = gram_matrix(&data.x, kernel);

    let mut pool = make_initial_pool(data, cfg.pool, derive_seed(cfg.seed, "pool", 0))?;
    let split = make_split(
        data,
        cfg.split,
        cfg.train_fraction,
        derive_seed(cfg.seed, "split", 0),
    )?;
    let costs = resolve_costs(cfg, split.fit_indices(&pool).len())?;
    let strategy_cfg = strategy_config(cfg, data);
    let neighbors = match cfg.strategy {
        StrategyKind::Nb | StrategyKind::Bnc => {
            NeighborIndex::build(&data.x, strategy_cfg.k_nn)
        }
        _ => NeighborIndex::stub(),
    };
    let oracle = Oracle::new(data.y.clone(), cfg.oracle_noise)?;

    let mut warnings = Vec::new();
    let mut timings = Vec::new();
    let mut records = Vec::new();

    let started = Instant::now();
    let mut current = fit_current(cfg, data, &gram, kernel, costs, &split, &pool)?;
    let initial_metrics = evaluate(&metrics, &current.decision, data, split.eval_indices());
    timings.push(started.elapsed().as_secs_f64() * 1e3);
    if let Some(audits) = audits.as_mut() {
        audits.push(ModelAudit::from_model(0, &current.model));
    }
    records.push(IterationRecord {
        t: 0,
        queried_index: None,
        oracle_label: None,
        metrics: initial_metrics,
        exploratory: None,
        timing_ms: None,
    });

    for t in 1..=cfg.budget {
        let started = Instant::now();
        let eligible = split.eligible_indices(&pool);
        if eligible.is_empty() {
            warnings.push(format!("pool exhausted after {} queries", t - 1));
            break;
        }
        let ctx = ScoreContext {
            data,
            gram: &gram,
            pool: &pool,
            model: &current.model,
            decision: &current.decision,
            neighbors: &neighbors,
            eligible: &eligible,
            cfg: &strategy_cfg,
        };
        let mut strategy_rng =
            ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "strategy", t as u64));
        let scored = score(cfg.strategy, &ctx, &mut strategy_rng)?;
        warnings.extend(scored.warnings.iter().map(|w| format!("t={t}: {w}")));
        let query = select_query(&scored.scores)?;

        let mut oracle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "oracle", t as u64));
        let label = oracle.answer(query, &mut oracle_rng);
        pool.assign(query, label)?;

        current = fit_current(cfg, data, &gram, kernel, costs, &split, &pool)?;
        if let Some(audits) = audits.as_mut() {
            audits.push(ModelAudit::from_model(t, &current.model));
        }
        let metric_values = evaluate(&metrics, &current.decision, data, split.eval_indices());
        timings.push(started.elapsed().as_secs_f64() * 1e3);
        records.push(IterationRecord {
            t,
            queried_index: Some(query),
            oracle_label: Some(label),
            metrics: metric_values,
            exploratory: (cfg.strategy == StrategyKind::Bnc).then_some(scored.exploratory),
            timing_ms: None,
        });
    }

    let curve = ProgressCurve::new(records)?;
    let summaries = default_summaries(&curve, &metrics);
    Ok(ResultRecord {
        fingerprint: cfg.fingerprint(),
        config: cfg.clone(),
        curve,
        summaries,
        warnings,
        timings_ms: timings,
    })
}

/// The summary set persisted with every run: sq, ru:5, qr, aeq:5, ls:5 and
/// roq, with window stats skipped on curves shorter than their window.
fn default_summaries(
    curve: &ProgressCurve,
    metrics: &[MetricKind],
) -> BTreeMap<String, BTreeMap<String, f64>> {
    let stats = [
        SummaryStat::Sq,
        SummaryStat::Ru(5),
        SummaryStat::Qr(None),
        SummaryStat::Aeq(5),
        SummaryStat::Ls(5),
        SummaryStat::Roq,
    ];
    let mut out = BTreeMap::new();
    for metric in metrics {
        let mut per_metric = BTreeMap::new();
        for stat in stats {
            if let Ok(v) = crate::metrics::summarize(curve, &metric.name(), stat) {
                per_metric.insert(stat.name(), v);
            }
        }
        out.insert(metric.name(), per_metric);
    }
    out
}

/// Status of one grid cell after execution.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "status")]
pub enum CellStatus {
    Ok,
    Failed { error: String },
    Infeasible { reason: String },
}

/// One executed (or excluded) grid cell.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub fingerprint: String,
    pub config: ExperimentConfig,
    pub status: CellStatus,
    pub record: Option<ResultRecord>,
    pub audits: Option<Vec<ModelAudit>>,
}

/// Run every cell of a prepared grid on a worker pool.
///
/// `workers` defaults to the available parallelism when zero. Failed cells
/// never abort the grid. `progress` is invoked once per finished cell from
/// worker threads.
pub fn run_grid(
    grid: &PreparedGrid,
    workers: usize,
    audit: bool,
    progress: impl Fn(&CellOutcome) + Sync,
) -> Vec<CellOutcome> {
    let workers = if workers == 0 {
        std::thread::available_parallelism().map_or(1, |p| p.get())
    } else {
        workers
    };
    let next = AtomicUsize::new(0);
    let outcomes: Mutex<Vec<Option<CellOutcome>>> = Mutex::new(vec![None; grid.cells.len()]);

    std::thread::scope(|scope| {
        for _ in 0..workers.min(grid.cells.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= grid.cells.len() {
                    break;
                }
                let cfg = &grid.cells[i];
                let data = &grid.datasets[&(cfg.dataset_path.clone(), cfg.resample_seed)];
                let mut audit_sink = audit.then(Vec::new);
                let result = run_experiment_inner(cfg, data, &mut audit_sink);
                let outcome = match result {
                    Ok(record) => CellOutcome {
                        fingerprint: record.fingerprint.clone(),
                        config: cfg.clone(),
                        status: CellStatus::Ok,
                        record: Some(record),
                        audits: audit_sink,
                    },
                    Err(e) => CellOutcome {
                        fingerprint: cfg.fingerprint(),
                        config: cfg.clone(),
                        status: CellStatus::Failed {
                            error: e.to_string(),
                        },
                        record: None,
                        audits: None,
                    },
                };
                progress(&outcome);
                outcomes.lock().unwrap()[i] = Some(outcome);
            });
        }
    });

    let mut results: Vec<CellOutcome> = outcomes
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|o| o.expect("every cell ran"))
        .collect();
    // excluded cells appear in the manifest with their reason
    for (cfg, reason) in &grid.excluded {
        results.push(CellOutcome {
            fingerprint: cfg.fingerprint(),
            config: cfg.clone(),
            status: CellStatus::Infeasible {
                reason: reason.clone(),
            },
            record: None,
            audits: None,
        });
    }
    results
}

impl CellOutcome {
    pub fn is_failed(&self) -> bool {
        matches!(self.status, CellStatus::Failed { .. })
    }
}

/// One line of `manifest.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub fingerprint: String,
    #[serde(flatten)]
    pub status: CellStatus,
    pub config: ExperimentConfig,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub summaries: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default)]
    pub total_ms: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct TimingLine {
    t: usize,
    timing_ms: f64,
}

/// Persist grid outcomes: `manifest.jsonl`, one `<fingerprint>.jsonl`
/// result file per executed cell (canonical, timing-free) and a
/// `<fingerprint>.timings.jsonl` sidecar with measured wall-clock times.
pub fn write_results(dir: &Path, outcomes: &[CellOutcome]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = std::fs::File::create(dir.join("manifest.jsonl"))?;
    for outcome in outcomes {
        let (warnings, summaries, total_ms) = match &outcome.record {
            Some(r) => (
                r.warnings.clone(),
                r.summaries.clone(),
                Some(r.timings_ms.iter().sum::<f64>()),
            ),
            None => (Vec::new(), BTreeMap::new(), None),
        };
        let entry = ManifestEntry {
            fingerprint: outcome.fingerprint.clone(),
            status: outcome.status.clone(),
            config: outcome.config.clone(),
            warnings,
            summaries,
            total_ms,
        };
        writeln!(manifest, "{}", serde_json::to_string(&entry)?)?;

        if let Some(record) = &outcome.record {
            let mut file = std::fs::File::create(dir.join(format!("{}.jsonl", outcome.fingerprint)))?;
            for line in &record.curve.records {
                writeln!(file, "{}", serde_json::to_string(line)?)?;
            }
            let mut timings =
                std::fs::File::create(dir.join(format!("{}.timings.jsonl", outcome.fingerprint)))?;
            for (t, ms) in record.timings_ms.iter().enumerate() {
                writeln!(
                    timings,
                    "{}",
                    serde_json::to_string(&TimingLine { t, timing_ms: *ms })?
                )?;
            }
            if let Some(audits) = &outcome.audits {
                let mut file = std::fs::File::create(
                    dir.join(format!("{}.audit.jsonl", outcome.fingerprint)),
                )?;
                for audit in audits {
                    writeln!(file, "{}", serde_json::to_string(audit)?)?;
                }
            }
        }
    }
    Ok(())
}

/// Parse one canonical result line. Exposed for untrusted-input testing.
pub fn parse_result_line(line: &str) -> Result<IterationRecord> {
    Ok(serde_json::from_str(line)?)
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let file = std::fs::File::open(dir.join("manifest.jsonl"))?;
    let mut entries = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        entries.push(serde_json::from_str(&line)?);
    }
    Ok(entries)
}

pub fn read_curve(dir: &Path, fingerprint: &str) -> Result<ProgressCurve> {
    let file = std::fs::File::open(dir.join(format!("{fingerprint}.jsonl")))?;
    let mut records = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_result_line(&line)?);
    }
    ProgressCurve::new(records)
}

/// Aggregation statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupStat {
    Median,
    Mean,
}

impl std::str::FromStr for GroupStat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median" => Ok(GroupStat::Median),
            "mean" => Ok(GroupStat::Mean),
            _ => Err(Error::UnknownName {
                kind: "stat",
                name: s.into(),
            }),
        }
    }
}

/// Grouped summary table; `None` cells render as "-".
#[derive(Debug, Clone)]
pub struct SummaryTable {
    pub group_by: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<(Vec<String>, Vec<Option<f64>>)>,
}

impl SummaryTable {
    pub fn render_text(&self) -> String {
        let mut headers: Vec<String> = self.group_by.clone();
        headers.extend(self.columns.iter().cloned());
        let mut table: Vec<Vec<String>> = vec![headers];
        for (key, values) in &self.rows {
            let mut row = key.clone();
            row.extend(values.iter().map(|v| match v {
                Some(v) => format!("{v:.4}"),
                None => "-".to_string(),
            }));
            table.push(row);
        }
        let widths: Vec<usize> = (0..table[0].len())
            .map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in table.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell:>w$}"))
                .collect();
            out.push_str(&line.join("  "));
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
                out.push('\n');
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.group_by.join(","));
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (key, values) in &self.rows {
            out.push_str(&key.join(","));
            for v in values {
                out.push(',');
                if let Some(v) = v {
                    out.push_str(&format!("{v}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Group executed cells and aggregate summary statistics of one metric.
///
/// Cells whose curve cannot produce a requested statistic (failed,
/// infeasible or too short) contribute nothing; empty groups render as
/// dashes.
pub fn aggregate(
    dir: &Path,
    group_by: &[String],
    stat: GroupStat,
    metric: &str,
    summaries: &[SummaryStat],
) -> Result<SummaryTable> {
    let entries = read_manifest(dir)?;
    let mut groups: BTreeMap<Vec<String>, Vec<Vec<Option<f64>>>> = BTreeMap::new();
    for entry in &entries {
        let key: Vec<String> = group_by
            .iter()
            .map(|g| {
                entry
                    .config
                    .field(g)
                    .ok_or_else(|| Error::UnknownName {
                        kind: "group-by",
                        name: g.clone(),
                    })
            })
            .collect::<Result<_>>()?;
        let values: Vec<Option<f64>> = match entry.status {
            CellStatus::Ok => {
                let curve = read_curve(dir, &entry.fingerprint)?;
                summaries
                    .iter()
                    .map(|s| crate::metrics::summarize(&curve, metric, *s).ok())
                    .collect()
            }
            _ => vec![None; summaries.len()],
        };
        groups.entry(key).or_default().push(values);
    }

    let columns: Vec<String> = summaries.iter().map(|s| s.name()).collect();
    let rows = groups
        .into_iter()
        .map(|(key, cell_values)| {
            let aggregated: Vec<Option<f64>> = (0..summaries.len())
                .map(|c| {
                    let mut values: Vec<f64> =
                        cell_values.iter().filter_map(|v| v[c]).collect();
                    if values.is_empty() {
                        return None;
                    }
                    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    Some(match stat {
                        GroupStat::Mean => values.iter().sum::<f64>() / values.len() as f64,
                        GroupStat::Median => {
                            let n = values.len();
                            if n % 2 == 1 {
                                values[n / 2]
                            } else {
                                0.5 * (values[n / 2 - 1] + values[n / 2])
                            }
                        }
                    })
                })
                .collect();
            (key, aggregated)
        })
        .collect();
    Ok(SummaryTable {
        group_by: group_by.to_vec(),
        columns,
        rows,
    })
}

/// Write plot-ready per-cell curve tables and a flat summary CSV.
///
/// One `<fingerprint>.<metric>.csv` per executed cell and configured
/// metric (columns: iteration, value, queried label), plus `summary.csv`
/// over all cells. Emission is deterministic and re-emission over the same
/// results directory is byte-identical.
pub fn emit_curves(results_dir: &Path, out_dir: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(out_dir)?;
    let entries = read_manifest(results_dir)?;
    let mut written = Vec::new();

    let mut summary = String::from(
        "fingerprint,dataset,resample_seed,pool,split,learner,gamma,strategy,seed,metric,\
         sq,ru:5,qr,aeq:5,ls:5,roq\n",
    );
    for entry in &entries {
        let CellStatus::Ok = entry.status else {
            continue;
        };
        let curve = read_curve(results_dir, &entry.fingerprint)?;
        for metric in &entry.config.metrics {
            let name = format!("{}.{}.csv", entry.fingerprint, metric.replace(':', "_"));
            let mut body = String::from("iteration,value,queried_label\n");
            for record in &curve.records {
                let value = record
                    .metrics
                    .get(metric)
                    .copied()
                    .flatten()
                    .map(|v| v.to_string())
                    .unwrap_or_default();
                let label = match record.oracle_label {
                    Some(Label::Inlier) => "inlier",
                    Some(Label::Outlier) => "outlier",
                    None => "",
                };
                body.push_str(&format!("{},{},{}\n", record.t, value, label));
            }
            std::fs::write(out_dir.join(&name), body)?;
            written.push(name);

            let stats = [
                SummaryStat::Sq,
                SummaryStat::Ru(5),
                SummaryStat::Qr(None),
                SummaryStat::Aeq(5),
                SummaryStat::Ls(5),
                SummaryStat::Roq,
            ];
            let fields: Vec<String> = ["dataset", "resample_seed", "pool", "split", "learner", "gamma", "strategy", "seed"]
                .iter()
                .map(|f| entry.config.field(f).unwrap_or_default())
                .collect();
            summary.push_str(&format!(
                "{},{},{}",
                entry.fingerprint,
                fields.join(","),
                metric
            ));
            for stat in stats {
                summary.push(',');
                if let Ok(v) = crate::metrics::summarize(&curve, metric, stat) {
                    summary.push_str(&v.to_string());
                }
            }
            summary.push('\n');
        }
    }
    std::fs::write(out_dir.join("summary.csv"), summary)?;
    written.push("summary.csv".into());
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::StrategyParams;
    use crate::kernel::GammaHeuristic;
    use crate::learners::Learner;
    use crate::matrix::Matrix;
    use crate::data::PoolStrategy;

    /// Gaussian blob plus a ring of distant outliers, normalized into the
    /// unit box.
    pub(crate) fn synthetic_blob(n_in: usize, n_out: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n_in {
            // Box-Muller from two uniforms
            let u1: f64 = rng.gen::<f64>().max(1e-12);
            let u2: f64 = rng.gen();
            let r = (-2.0 * u1.ln()).sqrt();
            let g1 = r * (2.0 * std::f64::consts::PI * u2).cos();
            let g2 = r * (2.0 * std::f64::consts::PI * u2).sin();
            rows.push(vec![0.5 + 0.06 * g1, 0.5 + 0.06 * g2]);
            y.push(Label::Inlier);
        }
        let mut placed = 0;
        while placed < n_out {
            let p = [rng.gen::<f64>(), rng.gen::<f64>()];
            let d = ((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2)).sqrt();
            if d > 0.28 {
                rows.push(p.to_vec());
                y.push(Label::Outlier);
                placed += 1;
            }
        }
        let mut x = Matrix::from_rows(&rows).unwrap();
        crate::data::normalize_columns(&mut x);
        Dataset::new("blob", x, y).unwrap()
    }

    pub(crate) fn base_config(strategy: StrategyKind, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            dataset_path: "synthetic".into(),
            dataset_name: "blob".into(),
            resample_seed: 0,
            outlier_rate: 0.05,
            max_n: 1000,
            pool: PoolStrategy::Pu,
            split: SplitStrategy::Sf,
            train_fraction: None,
            learner: Learner::SvddNeg,
            cost: CostSpec::Tax {
                expected_outlier_fraction: 0.05,
            },
            kappa: 0.0,
            gamma: GammaHeuristic::Scott,
            strategy,
            strategy_params: StrategyParams::default(),
            metrics: vec!["mcc".into()],
            budget: 10,
            seed,
            oracle_noise: 0.0,
        }
    }

    #[test]
    fn zero_budget_run_contains_only_the_initial_record() {
        let data = synthetic_blob(60, 4, 1);
        let mut cfg = base_config(StrategyKind::Db, 1);
        cfg.budget = 0;
        let record = run_experiment(&cfg, &data).unwrap();
        assert_eq!(record.curve.records.len(), 1);
        assert!(record.curve.records[0].metrics.contains_key("mcc"));
    }

    #[test]
    fn replays_are_bitwise_identical() {
        let data = synthetic_blob(50, 4, 2);
        let mut cfg = base_config(StrategyKind::Rand, 9);
        cfg.budget = 6;
        let a = run_experiment(&cfg, &data).unwrap();
        let b = run_experiment(&cfg, &data).unwrap();
        assert_eq!(a.fingerprint, b.fingerprint);
        assert_eq!(
            serde_json::to_string(&a.curve).unwrap(),
            serde_json::to_string(&b.curve).unwrap()
        );
    }

    #[test]
    fn budget_accounting_without_truncation() {
        let data = synthetic_blob(50, 4, 3);
        let mut cfg = base_config(StrategyKind::Db, 5);
        cfg.budget = 12;
        let record = run_experiment(&cfg, &data).unwrap();
        assert_eq!(record.curve.query_count(), 12);
        // all queried indices distinct
        let queried: Vec<usize> = record.curve.records[1..]
            .iter()
            .map(|r| r.queried_index.unwrap())
            .collect();
        let unique: std::collections::HashSet<_> = queried.iter().collect();
        assert_eq!(unique.len(), queried.len());
    }

    #[test]
    fn perfect_oracle_answers_match_ground_truth_and_roq() {
        let data = synthetic_blob(40, 5, 4);
        let mut cfg = base_config(StrategyKind::Rand, 2);
        cfg.budget = 15;
        let record = run_experiment(&cfg, &data).unwrap();
        let mut queried_outliers = 0usize;
        for r in &record.curve.records[1..] {
            let idx = r.queried_index.unwrap();
            assert_eq!(r.oracle_label.unwrap(), data.y[idx]);
            if data.y[idx] == Label::Outlier {
                queried_outliers += 1;
            }
        }
        let roq =
            crate::metrics::summarize(&record.curve, "mcc", SummaryStat::Roq).unwrap();
        assert!((roq - queried_outliers as f64 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn holdout_queries_never_touch_the_test_set() {
        let data = synthetic_blob(80, 6, 5);
        let mut cfg = base_config(StrategyKind::Db, 3);
        cfg.split = SplitStrategy::Sh;
        cfg.train_fraction = Some(0.8);
        cfg.budget = 15;
        let record = run_experiment(&cfg, &data).unwrap();
        let split = make_split(
            &data,
            SplitStrategy::Sh,
            Some(0.8),
            derive_seed(cfg.seed, "split", 0),
        )
        .unwrap();
        let holdout: std::collections::HashSet<usize> =
            split.test_idx.iter().copied().collect();
        for r in &record.curve.records[1..] {
            assert!(!holdout.contains(&r.queried_index.unwrap()));
        }
    }

    #[test]
    fn pool_exhaustion_truncates_with_warning() {
        let data = synthetic_blob(18, 2, 6);
        let mut cfg = base_config(StrategyKind::Db, 4);
        cfg.budget = 20;
        // feasible per the size rule (20 + 0 <= 20) but every observation
        // is labeled after 20 queries; the run must stop cleanly
        let record = run_experiment(&cfg, &data).unwrap();
        assert_eq!(record.curve.query_count(), 20);
        // now force truncation with a pool that pre-labels observations
        let mut cfg = base_config(StrategyKind::Db, 4);
        cfg.pool = PoolStrategy::Pn(5);
        cfg.budget = 15;
        let record = run_experiment(&cfg, &data).unwrap();
        assert!(record.curve.query_count() == 15 || !record.warnings.is_empty());
    }

    #[test]
    fn result_store_round_trips_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let data = synthetic_blob(40, 4, 7);
        let mut cfg = base_config(StrategyKind::Bnc, 11);
        cfg.budget = 8;
        let record = run_experiment(&cfg, &data).unwrap();
        let outcome = CellOutcome {
            fingerprint: record.fingerprint.clone(),
            config: cfg.clone(),
            status: CellStatus::Ok,
            record: Some(record.clone()),
            audits: None,
        };
        write_results(dir.path(), std::slice::from_ref(&outcome)).unwrap();

        let manifest = read_manifest(dir.path()).unwrap();
        assert_eq!(manifest.len(), 1);
        let curve = read_curve(dir.path(), &record.fingerprint).unwrap();
        assert_eq!(curve, record.curve);

        // canonical result file is byte-identical across rewrites
        let path = dir.path().join(format!("{}.jsonl", record.fingerprint));
        let first = std::fs::read(&path).unwrap();
        write_results(dir.path(), std::slice::from_ref(&outcome)).unwrap();
        let second = std::fs::read(&path).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn aggregate_renders_missing_groups_as_dashes() {
        let dir = tempfile::tempdir().unwrap();
        let data = synthetic_blob(40, 4, 8);
        let mut ok_cfg = base_config(StrategyKind::Db, 1);
        ok_cfg.budget = 6;
        let record = run_experiment(&ok_cfg, &data).unwrap();
        let mut failed_cfg = base_config(StrategyKind::Mm, 1);
        failed_cfg.budget = 6;
        let outcomes = vec![
            CellOutcome {
                fingerprint: record.fingerprint.clone(),
                config: ok_cfg,
                status: CellStatus::Ok,
                record: Some(record),
                audits: None,
            },
            CellOutcome {
                fingerprint: failed_cfg.fingerprint(),
                config: failed_cfg,
                status: CellStatus::Infeasible {
                    reason: "mm needs labeled inliers".into(),
                },
                record: None,
                audits: None,
            },
        ];
        write_results(dir.path(), &outcomes).unwrap();
        let table = aggregate(
            dir.path(),
            &["strategy".to_string()],
            GroupStat::Median,
            "mcc",
            &[SummaryStat::Qr(None)],
        )
        .unwrap();
        assert_eq!(table.rows.len(), 2);
        let rendered = table.render_text();
        assert!(rendered.contains('-'));
        let mm_row = table.rows.iter().find(|(k, _)| k[0] == "mm").unwrap();
        assert!(mm_row.1[0].is_none());
    }

    #[test]
    fn emitted_curves_have_one_row_per_iteration_and_re_emit_identically() {
        let results = tempfile::tempdir().unwrap();
        let plots = tempfile::tempdir().unwrap();
        let data = synthetic_blob(40, 4, 9);
        let mut cfg = base_config(StrategyKind::Db, 6);
        cfg.budget = 10;
        let record = run_experiment(&cfg, &data).unwrap();
        let fp = record.fingerprint.clone();
        let outcome = CellOutcome {
            fingerprint: fp.clone(),
            config: cfg,
            status: CellStatus::Ok,
            record: Some(record),
            audits: None,
        };
        write_results(results.path(), &[outcome]).unwrap();
        emit_curves(results.path(), plots.path()).unwrap();
        let curve_file = plots.path().join(format!("{fp}.mcc.csv"));
        let body = std::fs::read_to_string(&curve_file).unwrap();
        // header + init + 10 iterations
        assert_eq!(body.lines().count(), 12);
        let before = std::fs::read(&curve_file).unwrap();
        emit_curves(results.path(), plots.path()).unwrap();
        assert_eq!(before, std::fs::read(&curve_file).unwrap());
    }

    #[test]
    fn derived_seeds_separate_streams() {
        assert_ne!(derive_seed(1, "pool", 0), derive_seed(1, "strategy", 0));
        assert_ne!(derive_seed(1, "strategy", 1), derive_seed(1, "strategy", 2));
        assert_ne!(derive_seed(1, "pool", 0), derive_seed(2, "pool", 0));
        assert_eq!(derive_seed(7, "oracle", 3), derive_seed(7, "oracle", 3));
    }
}
