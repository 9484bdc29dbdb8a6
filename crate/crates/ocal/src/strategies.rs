//! Query strategies: informativeness scoring and query selection.
//!
//! Data-based strategies (`mm`, `emm`, `eme`, `ml`) compare density
//! estimates, model-based strategies (`hc`, `db`) read the decision
//! function, hybrids (`nb`, `bnc`) combine both, and two random baselines
//! complete the set. Densities are plugged into the formulas as-is (not
//! probabilities), reproducing the published behavior; the ratio
//! `p(x|in)/p(x)` is clamped to keep scores finite near vanishing density.

use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PoolState, SplitStrategy};
use crate::density::{kde_fit, DensityModel};
use crate::error::{Error, Result};
use crate::kernel::GramMatrix;
use crate::learners::{Learner, TrainedModel};
use crate::matrix::{squared_distance, Matrix};

/// Upper clamp for the density ratio `p(x|in)/p(x)`.
const RATIO_CLAMP: f64 = 1e3;
/// Densities below this are treated as vanished far-field mass.
const DENSITY_FLOOR: f64 = 1e-300;

/// The ten query strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Mm,
    Emm,
    Eme,
    Ml,
    Hc,
    Db,
    Nb,
    Bnc,
    Rand,
    RandOut,
}

impl StrategyKind {
    pub fn all() -> [StrategyKind; 10] {
        [
            StrategyKind::Mm,
            StrategyKind::Emm,
            StrategyKind::Eme,
            StrategyKind::Ml,
            StrategyKind::Hc,
            StrategyKind::Db,
            StrategyKind::Nb,
            StrategyKind::Bnc,
            StrategyKind::Rand,
            StrategyKind::RandOut,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Mm => "mm",
            StrategyKind::Emm => "emm",
            StrategyKind::Eme => "eme",
            StrategyKind::Ml => "ml",
            StrategyKind::Hc => "hc",
            StrategyKind::Db => "db",
            StrategyKind::Nb => "nb",
            StrategyKind::Bnc => "bnc",
            StrategyKind::Rand => "rand",
            StrategyKind::RandOut => "rand_out",
        }
    }

    /// Strategies whose scores are built on density estimates.
    pub fn is_data_based(&self) -> bool {
        matches!(
            self,
            StrategyKind::Mm | StrategyKind::Emm | StrategyKind::Eme | StrategyKind::Ml
        )
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::all()
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownName {
                kind: "strategy",
                name: s.into(),
            })
    }
}

/// Which observations estimate the marginal density `p(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PxSupport {
    All,
    Unlabeled,
}

/// Strategy parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    /// Class prior `p(in)`; the harness sets the true inlier share.
    pub prior_inlier: f64,
    /// Trade-off between boundary distance and neighborhood labels in `nb`.
    pub eta_nb: f64,
    /// Neighborhood size for `nb`.
    pub k_nn: usize,
    /// Trade-off between boundary and nearest-neighbor terms in `bnc`.
    pub eta_bnc: f64,
    /// Probability of a uniform random query per `bnc` iteration.
    pub p_bnc: f64,
    /// Support of the marginal density estimate.
    pub px_support: PxSupport,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            prior_inlier: 0.95,
            eta_nb: 0.5,
            k_nn: 10,
            eta_bnc: 0.7,
            p_bnc: 0.15,
            px_support: PxSupport::All,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.prior_inlier > 0.0 && self.prior_inlier < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "prior_inlier must lie in (0, 1), got {}",
                self.prior_inlier
            )));
        }
        for (name, v) in [("eta_nb", self.eta_nb), ("eta_bnc", self.eta_bnc)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.p_bnc) {
            return Err(Error::InvalidParameter(format!(
                "p_bnc must lie in [0, 1], got {}",
                self.p_bnc
            )));
        }
        if self.k_nn == 0 {
            return Err(Error::InvalidParameter("k_nn must be positive".into()));
        }
        Ok(())
    }
}

/// Informativeness of every eligible observation.
#[derive(Debug, Clone, PartialEq)]
pub struct InformativenessVector {
    pub eligible: Vec<usize>,
    pub scores: Vec<f64>,
}

/// Scoring result plus bookkeeping flags.
#[derive(Debug, Clone)]
pub struct ScoredQueries {
    pub scores: InformativenessVector,
    /// The iteration took a random-exploration branch (`bnc` coin).
    pub exploratory: bool,
    pub warnings: Vec<String>,
}

/// Clamped density ratio `p(x|in) / p(x)`; `None` marks vanished far-field
/// density, which strategies map to an uninformative score of zero.
pub fn density_ratio(p_in: f64, p_x: f64) -> Option<f64> {
    if p_x < DENSITY_FLOOR {
        return None;
    }
    Some((p_in / p_x).clamp(0.0, RATIO_CLAMP))
}

/// Minimum-margin informativeness from the clamped ratio and the inlier
/// prior: the negated absolute posterior difference.
pub fn tau_mm(r: f64, prior_inlier: f64) -> f64 {
    -(2.0 * r * prior_inlier - 1.0).abs()
}

/// Expected minimum margin under a uniform outlier-share prior.
pub fn tau_emm(r: f64) -> f64 {
    let s = match 0.5 - r {
        d if d > 0.0 => 1.0,
        d if d < 0.0 => -1.0,
        _ => 0.0,
    };
    (r - 1.0) * s
}

/// Expected maximum entropy under a uniform outlier-share prior; zero
/// outside the open interval where the closed form is defined.
pub fn tau_eme(r: f64) -> f64 {
    if r <= 0.0 || r >= 1.0 {
        return 0.0;
    }
    (-r * r * r.ln() + r) / (2.0 * r) + (r - 1.0) * (r - 1.0) * (1.0 - r).ln() / (2.0 * r)
}

/// Minimum-loss scorer: the expected change of the leave-one-out inlier
/// density estimate if the candidate were labeled.
///
/// Precomputes the pairwise kernel sums over the current labeled sets so a
/// candidate costs O(|L|). In modified mode (too few labeled outliers) the
/// subtrahend terms are omitted.
pub struct MlScorer {
    gamma: f64,
    normalizer: f64,
    in_idx: Vec<usize>,
    out_idx: Vec<usize>,
    /// Sum over labeled inliers of their kernel sums to the other inliers.
    base_sum: f64,
    /// Kernel sum from each labeled outlier to the labeled inliers.
    out_cross_sum: f64,
    /// Unaugmented leave-one-out mean over the labeled inliers.
    loo_mean: f64,
    prior_inlier: f64,
    modified: bool,
}

impl MlScorer {
    pub fn new(
        x: &Matrix,
        in_idx: Vec<usize>,
        out_idx: Vec<usize>,
        gamma: f64,
        prior_inlier: f64,
        modified: bool,
    ) -> Result<Self> {
        if in_idx.is_empty() {
            return Err(Error::InfeasibleScenario(
                "minimum-loss scoring needs labeled inliers".into(),
            ));
        }
        let m = x.cols() as f64;
        let normalizer = (gamma / std::f64::consts::PI).powf(m / 2.0);
        let n = in_idx.len();
        let mut base_sum = 0.0;
        for (a, &i) in in_idx.iter().enumerate() {
            for (b, &j) in in_idx.iter().enumerate() {
                if a != b {
                    base_sum += (-gamma * squared_distance(x.row(i), x.row(j))).exp();
                }
            }
        }
        let mut out_cross_sum = 0.0;
        for &o in &out_idx {
            for &i in &in_idx {
                out_cross_sum += (-gamma * squared_distance(x.row(o), x.row(i))).exp();
            }
        }
        let loo_mean = if n >= 2 {
            normalizer * base_sum / (n as f64 * (n - 1) as f64)
        } else {
            0.0
        };
        Ok(Self {
            gamma,
            normalizer,
            in_idx,
            out_idx,
            base_sum,
            out_cross_sum,
            loo_mean,
            prior_inlier,
            modified,
        })
    }

    /// Score a candidate given its raw kernel sums to the labeled inliers
    /// (`c_in`) and labeled outliers (`c_out`).
    fn score_from_sums(&self, c_in: f64, c_out: f64) -> f64 {
        let n = self.in_idx.len() as f64;
        let q = self.out_idx.len() as f64;
        // inlier case: leave-one-out mean over the augmented inlier set
        let mean_aug = self.normalizer * (self.base_sum + 2.0 * c_in) / (n * (n + 1.0));
        let mut tau_in = mean_aug;
        let mut tau_out = self.loo_mean;
        if !self.modified {
            // augmented-density readings at the labeled outliers
            tau_in -= self.normalizer * (self.out_cross_sum + c_out) / (q * (n + 1.0));
            // plain-density readings at the augmented outlier set
            tau_out -= self.normalizer * (self.out_cross_sum + c_in) / (n * (q + 1.0));
        }
        self.prior_inlier * tau_in + (1.0 - self.prior_inlier) * tau_out
    }

    /// Score an arbitrary point.
    pub fn score_point(&self, x: &Matrix, point: &[f64]) -> f64 {
        let c_in: f64 = self
            .in_idx
            .iter()
            .map(|&i| (-self.gamma * squared_distance(x.row(i), point)).exp())
            .sum();
        let c_out: f64 = self
            .out_idx
            .iter()
            .map(|&o| (-self.gamma * squared_distance(x.row(o), point)).exp())
            .sum();
        self.score_from_sums(c_in, c_out)
    }

    /// Score dataset row `t` through the cached Gram matrix.
    pub fn score_index(&self, gram: &GramMatrix, t: usize) -> f64 {
        let row = gram.row(t);
        let c_in: f64 = self.in_idx.iter().map(|&i| row[i]).sum();
        let c_out: f64 = self.out_idx.iter().map(|&o| row[o]).sum();
        self.score_from_sums(c_in, c_out)
    }
}

/// Static nearest-neighbor tables in normalized feature space.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    knn: Vec<Vec<usize>>,
    nn1_dist: Vec<f64>,
    pub k: usize,
}

impl NeighborIndex {
    /// Placeholder for strategies that never consult neighborhoods.
    pub fn stub() -> Self {
        Self {
            knn: Vec::new(),
            nn1_dist: Vec::new(),
            k: 0,
        }
    }

    /// Neighbor lists of length `k` (capped at N-1) per observation,
    /// excluding the observation itself, ties broken by index.
    pub fn build(x: &Matrix, k: usize) -> Self {
        let n = x.rows();
        let k = k.min(n.saturating_sub(1));
        let mut knn = Vec::with_capacity(n);
        let mut nn1_dist = Vec::with_capacity(n);
        for i in 0..n {
            let mut dists: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (squared_distance(x.row(i), x.row(j)), j))
                .collect();
            dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            nn1_dist.push(dists.first().map_or(0.0, |d| d.0.sqrt()));
            knn.push(dists.into_iter().take(k).map(|(_, j)| j).collect());
        }
        Self { knn, nn1_dist, k }
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.knn[i]
    }

    pub fn nn1_distance(&self, i: usize) -> f64 {
        self.nn1_dist[i]
    }
}

/// Neighborhood penalty: the share of labeled inliers among the k nearest
/// neighbors, mapped to [-1, -0.5].
pub fn tau_nb_hat(labeled_inlier_neighbors: usize, k: usize) -> f64 {
    -(0.5 + labeled_inlier_neighbors as f64 / (2.0 * k as f64))
}

/// Everything a strategy may consult for one iteration.
pub struct ScoreContext<'a> {
    pub data: &'a Dataset,
    pub gram: &'a GramMatrix,
    pub pool: &'a PoolState,
    pub model: &'a TrainedModel,
    /// Decision values of the current model over all dataset rows.
    pub decision: &'a [f64],
    pub neighbors: &'a NeighborIndex,
    /// Unlabeled observations the strategy may select from, ascending.
    pub eligible: &'a [usize],
    pub cfg: &'a StrategyConfig,
}

/// Score the eligible set with the requested strategy.
pub fn score(
    kind: StrategyKind,
    ctx: &ScoreContext,
    rng: &mut ChaCha8Rng,
) -> Result<ScoredQueries> {
    ctx.cfg.validate()?;
    let eligible = ctx.eligible.to_vec();
    let mut warnings = Vec::new();
    let mut exploratory = false;

    let scores: Vec<f64> = match kind {
        StrategyKind::Mm | StrategyKind::Emm | StrategyKind::Eme => {
            let (p_in, p_x) = density_models(ctx)?;
            eligible
                .iter()
                .map(|&t| {
                    let r = density_ratio(
                        p_in.eval_index(ctx.gram, t),
                        p_x.eval_index(ctx.gram, t),
                    );
                    match r {
                        None => 0.0,
                        Some(r) => match kind {
                            StrategyKind::Mm => tau_mm(r, ctx.cfg.prior_inlier),
                            StrategyKind::Emm => tau_emm(r),
                            _ => tau_eme(r),
                        },
                    }
                })
                .collect()
        }
        StrategyKind::Ml => {
            let in_idx = ctx.pool.labeled_inliers();
            let out_idx = ctx.pool.labeled_outliers();
            let modified = out_idx.len() < ctx.data.m();
            let scorer = MlScorer::new(
                &ctx.data.x,
                in_idx,
                out_idx,
                ctx.model.kernel.gamma,
                ctx.cfg.prior_inlier,
                modified,
            )?;
            eligible
                .iter()
                .map(|&t| scorer.score_index(ctx.gram, t))
                .collect()
        }
        StrategyKind::Hc => eligible.iter().map(|&t| ctx.decision[t]).collect(),
        StrategyKind::Db => eligible.iter().map(|&t| -ctx.decision[t].abs()).collect(),
        StrategyKind::Nb => {
            let labeled_in: std::collections::HashSet<usize> =
                ctx.pool.labeled_inliers().into_iter().collect();
            let eta = ctx.cfg.eta_nb;
            eligible
                .iter()
                .map(|&t| {
                    let neighbors = ctx.neighbors.neighbors(t);
                    let hits = neighbors.iter().filter(|j| labeled_in.contains(j)).count();
                    let hat = tau_nb_hat(hits, ctx.neighbors.k.max(1));
                    eta * -ctx.decision[t].abs() + (1.0 - eta) * hat
                })
                .collect()
        }
        StrategyKind::Bnc => {
            if rng.gen::<f64>() < ctx.cfg.p_bnc {
                exploratory = true;
                eligible.iter().map(|_| positive_uniform(rng)).collect()
            } else {
                let abs_f: Vec<f64> = eligible.iter().map(|&t| ctx.decision[t].abs()).collect();
                let nn1: Vec<f64> = eligible
                    .iter()
                    .map(|&t| ctx.neighbors.nn1_distance(t))
                    .collect();
                let min_f = abs_f.iter().cloned().fold(f64::INFINITY, f64::min);
                let max_f = abs_f.iter().cloned().fold(0.0f64, f64::max);
                let min_d = nn1.iter().cloned().fold(f64::INFINITY, f64::min);
                let max_d = nn1.iter().cloned().fold(0.0f64, f64::max);
                let eta = ctx.cfg.eta_bnc;
                abs_f
                    .iter()
                    .zip(&nn1)
                    .map(|(&fa, &d)| {
                        // zero-denominator terms contribute nothing
                        let boundary = if max_f > 0.0 { -(fa - min_f) / max_f } else { 0.0 };
                        let sparsity = if max_d > 0.0 { -(d - min_d) / max_d } else { 0.0 };
                        (1.0 - eta) * boundary + eta * sparsity
                    })
                    .collect()
            }
        }
        StrategyKind::Rand => eligible.iter().map(|_| positive_uniform(rng)).collect(),
        StrategyKind::RandOut => {
            let any_outlier = eligible.iter().any(|&t| ctx.decision[t] > 0.0);
            if any_outlier {
                eligible
                    .iter()
                    .map(|&t| {
                        if ctx.decision[t] > 0.0 {
                            positive_uniform(rng)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            } else {
                warnings
                    .push("rand_out: no predicted outliers, fell back to uniform queries".into());
                eligible.iter().map(|_| positive_uniform(rng)).collect()
            }
        }
    };

    for (pos, s) in scores.iter().enumerate() {
        if !s.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "non-finite informativeness for observation {}",
                eligible[pos]
            )));
        }
    }
    Ok(ScoredQueries {
        scores: InformativenessVector { eligible, scores },
        exploratory,
        warnings,
    })
}

fn positive_uniform(rng: &mut ChaCha8Rng) -> f64 {
    let v: f64 = rng.gen();
    if v == 0.0 {
        f64::MIN_POSITIVE
    } else {
        v
    }
}

fn density_models(ctx: &ScoreContext) -> Result<(DensityModel, DensityModel)> {
    let gamma = ctx.model.kernel.gamma;
    let p_in = kde_fit(&ctx.data.x, ctx.pool.labeled_inliers(), gamma)?;
    let px_support = match ctx.cfg.px_support {
        PxSupport::All => (0..ctx.data.n()).collect(),
        PxSupport::Unlabeled => ctx.pool.unlabeled(),
    };
    let p_x = kde_fit(&ctx.data.x, px_support, gamma)?;
    Ok((p_in, p_x))
}

/// Argmax query selection; ties break to the lowest observation index.
pub fn select_query(scores: &InformativenessVector) -> Result<usize> {
    if scores.eligible.is_empty() {
        return Err(Error::InfeasibleScenario(
            "pool exhausted: no eligible observations left".into(),
        ));
    }
    let mut best = 0usize;
    for i in 1..scores.scores.len() {
        if scores.scores[i] > scores.scores[best] {
            best = i;
        }
    }
    Ok(scores.eligible[best])
}

/// Gate verdict: feasible outright, or feasible with the minimum-loss
/// subtrahend terms dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateOutcome {
    Feasible,
    FeasibleWithModification,
}

/// Scenario facts the feasibility rules consult.
#[derive(Debug, Clone, Copy)]
pub struct ScenarioFacts {
    pub labeled_inliers: usize,
    pub labeled_outliers: usize,
    pub attributes: usize,
    /// The initial pool carries no labels at all (Pu).
    pub pool_unlabeled: bool,
}

/// Enforce the combination rules between strategies, pools, splits and
/// learners.
///
/// Strategies built on the labeled-inlier density (the data-based four and
/// `hc`) need at least as many labeled inliers as attributes; `ml`
/// additionally wants that many labeled outliers and otherwise runs in
/// modified mode. A fully unsupervised learner only makes sense when the
/// training set is the labeled inliers, and an unlabeled initial pool
/// cannot be combined with that split.
pub fn feasibility_gate(
    strategy: StrategyKind,
    facts: &ScenarioFacts,
    split: SplitStrategy,
    learner: Learner,
) -> Result<GateOutcome> {
    if facts.pool_unlabeled && split == SplitStrategy::Si {
        return Err(Error::InfeasibleScenario(
            "pu pool with si split: the inlier-only training set would be empty".into(),
        ));
    }
    if learner == Learner::Svdd && split != SplitStrategy::Si {
        return Err(Error::InfeasibleScenario(
            "unsupervised svdd cannot absorb feedback; it is only useful with the si split"
                .into(),
        ));
    }
    if split == SplitStrategy::Si && facts.labeled_inliers == 0 {
        return Err(Error::InfeasibleScenario(
            "si split needs at least one labeled inlier".into(),
        ));
    }
    let needs_inlier_density = facts.labeled_inliers >= facts.attributes;
    match strategy {
        StrategyKind::Mm | StrategyKind::Emm | StrategyKind::Eme | StrategyKind::Hc => {
            if needs_inlier_density {
                Ok(GateOutcome::Feasible)
            } else {
                Err(Error::InfeasibleScenario(format!(
                    "{} needs at least {} labeled inliers, found {}",
                    strategy.name(),
                    facts.attributes,
                    facts.labeled_inliers
                )))
            }
        }
        StrategyKind::Ml => {
            if !needs_inlier_density {
                Err(Error::InfeasibleScenario(format!(
                    "ml needs at least {} labeled inliers, found {}",
                    facts.attributes, facts.labeled_inliers
                )))
            } else if facts.labeled_outliers >= facts.attributes {
                Ok(GateOutcome::Feasible)
            } else {
                Ok(GateOutcome::FeasibleWithModification)
            }
        }
        _ => Ok(GateOutcome::Feasible),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Label, LabelStatus};
    use crate::kernel::{gram_matrix, CostConfig, KernelConfig};
    use crate::learners::{fit, FitOptions};
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn mm_boundary_values() {
        // posterior balance is the maximum
        assert_eq!(tau_mm(0.5 / 0.9, 0.9), 0.0);
        // vanished inlier density marks a pure outlier region
        assert_eq!(tau_mm(0.0, 0.9), -1.0);
    }

    #[test]
    fn emm_boundary_values() {
        assert_eq!(tau_emm(0.5), 0.0);
        assert_eq!(tau_emm(1.0), 0.0);
        assert_eq!(tau_emm(0.0), -1.0);
        assert!(tau_emm(2.0) < 0.0);
    }

    #[test]
    fn eme_boundary_and_midpoint() {
        assert_eq!(tau_eme(1.0), 0.0);
        assert_eq!(tau_eme(1.5), 0.0);
        assert_eq!(tau_eme(0.0), 0.0);
        // closed form collapses to exactly 1/2 at r = 1/2
        assert!((tau_eme(0.5) - 0.5).abs() < 1e-15);
        // hand evaluation at r = 0.25
        let r: f64 = 0.25;
        let by_hand = (-r * r * r.ln() + r) / (2.0 * r)
            + (r - 1.0) * (r - 1.0) * (0.75f64).ln() / (2.0 * r);
        assert_eq!(tau_eme(0.25), by_hand);
    }

    #[test]
    fn nb_hat_endpoints() {
        assert_eq!(tau_nb_hat(0, 10), -0.5);
        assert_eq!(tau_nb_hat(10, 10), -1.0);
    }

    fn blob_dataset(n: usize) -> Dataset {
        let mut state = 77u64;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![next(), next()]).collect();
        let y: Vec<Label> = (0..n)
            .map(|i| if i % 7 == 6 { Label::Outlier } else { Label::Inlier })
            .collect();
        Dataset::new("blob", Matrix::from_rows(&rows).unwrap(), y).unwrap()
    }

    struct Fixture {
        data: Dataset,
        gram: GramMatrix,
        pool: PoolState,
        model: TrainedModel,
        decision: Vec<f64>,
        neighbors: NeighborIndex,
        eligible: Vec<usize>,
        cfg: StrategyConfig,
    }

    fn fixture(n: usize, k_nn: usize) -> Fixture {
        let data = blob_dataset(n);
        let kernel = KernelConfig::new(2.0).unwrap();
        let gram = gram_matrix(&data.x, kernel);
        let mut pool = PoolState::new(n);
        for i in 0..4 {
            pool.assign(i, Label::Inlier).unwrap();
        }
        pool.assign(n - 1, Label::Outlier).unwrap();
        let train_idx: Vec<usize> = (0..n).collect();
        let status: Vec<LabelStatus> = (0..n).map(|i| pool.status(i)).collect();
        let costs = CostConfig::new(0.5, 0.5, 0.5, 0.0).unwrap();
        let model = fit(
            crate::learners::Learner::SvddNeg,
            &gram,
            &train_idx,
            &status,
            kernel,
            costs,
            &FitOptions::default(),
        )
        .unwrap();
        let decision = model.decision_values_indexed(&gram, &train_idx);
        let neighbors = NeighborIndex::build(&data.x, k_nn);
        let eligible = pool.unlabeled();
        Fixture {
            data,
            gram,
            pool,
            model,
            decision,
            neighbors,
            eligible,
            cfg: StrategyConfig::default(),
        }
    }

    impl Fixture {
        fn ctx(&self) -> ScoreContext<'_> {
            ScoreContext {
                data: &self.data,
                gram: &self.gram,
                pool: &self.pool,
                model: &self.model,
                decision: &self.decision,
                neighbors: &self.neighbors,
                eligible: &self.eligible,
                cfg: &self.cfg,
            }
        }
    }

    #[test]
    fn hc_and_db_read_the_decision_function() {
        let f = fixture(25, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hc = score(StrategyKind::Hc, &f.ctx(), &mut rng).unwrap();
        let db = score(StrategyKind::Db, &f.ctx(), &mut rng).unwrap();
        for (pos, &t) in f.eligible.iter().enumerate() {
            assert_eq!(hc.scores.scores[pos], f.decision[t]);
            assert_eq!(db.scores.scores[pos], -f.decision[t].abs());
        }
        // hc argmax is the maximal decision value among eligible
        let best = select_query(&hc.scores).unwrap();
        let max_f = f
            .eligible
            .iter()
            .map(|&t| f.decision[t])
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(f.decision[best], max_f);
    }

    #[test]
    fn nb_with_full_boundary_weight_is_db() {
        let mut f = fixture(25, 5);
        f.cfg.eta_nb = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let nb = score(StrategyKind::Nb, &f.ctx(), &mut rng).unwrap();
        let db = score(StrategyKind::Db, &f.ctx(), &mut rng).unwrap();
        assert_eq!(nb.scores.scores, db.scores.scores);
    }

    #[test]
    fn bnc_degenerate_normalization_and_db_reduction() {
        let mut f = fixture(25, 5);
        f.cfg.p_bnc = 0.0;
        f.cfg.eta_bnc = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bnc = score(StrategyKind::Bnc, &f.ctx(), &mut rng).unwrap();
        let db = score(StrategyKind::Db, &f.ctx(), &mut rng).unwrap();
        // same ordering as db at the eta = 0, p = 0 endpoint
        let order = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap().then(a.cmp(&b)));
            idx
        };
        assert_eq!(order(&bnc.scores.scores), order(&db.scores.scores));

        // identical |f| everywhere zeroes the boundary term
        let flat: Vec<f64> = vec![0.3; f.data.n()];
        let ctx = ScoreContext {
            decision: &flat,
            ..f.ctx()
        };
        let bnc = score(StrategyKind::Bnc, &ctx, &mut rng).unwrap();
        for (pos, s) in bnc.scores.scores.iter().enumerate() {
            let t = f.eligible[pos];
            let expected = 0.0;
            // eta_bnc = 0: only the boundary term remains and it is zero
            assert_eq!(*s, expected, "observation {t}");
        }
    }

    #[test]
    fn bnc_small_instance_matches_exhaustive_evaluation() {
        // five points, scores computed by hand from the combination of
        // normalized boundary distance and normalized first-neighbor
        // distance; both bracketed terms peak at the respective minima
        let rows = vec![
            vec![0.0, 0.0],
            vec![0.6, 0.6],
            vec![0.62, 0.6],
            vec![0.6, 0.62],
            vec![0.64, 0.62],
        ];
        let data = Dataset::new(
            "tiny",
            Matrix::from_rows(&rows).unwrap(),
            vec![Label::Inlier; 5],
        )
        .unwrap();
        let f = fixture(25, 5);
        let decision = vec![0.01, 0.5, -0.6, 0.7, -0.8];
        let neighbors = NeighborIndex::build(&data.x, 1);
        let pool = PoolState::new(5);
        let eligible: Vec<usize> = (0..5).collect();
        let cfg = StrategyConfig {
            p_bnc: 0.0,
            ..StrategyConfig::default()
        };
        let ctx = ScoreContext {
            data: &data,
            gram: &f.gram,
            pool: &pool,
            model: &f.model,
            decision: &decision,
            neighbors: &neighbors,
            eligible: &eligible,
            cfg: &cfg,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let scored = score(StrategyKind::Bnc, &ctx, &mut rng).unwrap();
        assert!(!scored.exploratory);

        // exhaustive oracle over the five candidates
        let abs_f: Vec<f64> = decision.iter().map(|v| v.abs()).collect();
        let nn1: Vec<f64> = (0..5).map(|i| neighbors.nn1_distance(i)).collect();
        let min_f = abs_f.iter().cloned().fold(f64::INFINITY, f64::min);
        let max_f = abs_f.iter().cloned().fold(0.0f64, f64::max);
        let min_d = nn1.iter().cloned().fold(f64::INFINITY, f64::min);
        let max_d = nn1.iter().cloned().fold(0.0f64, f64::max);
        let oracle: Vec<f64> = (0..5)
            .map(|i| {
                (1.0 - cfg.eta_bnc) * (-(abs_f[i] - min_f) / max_f)
                    + cfg.eta_bnc * (-(nn1[i] - min_d) / max_d)
            })
            .collect();
        for (a, b) in scored.scores.scores.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut best = 0;
        for i in 1..5 {
            if oracle[i] > oracle[best] {
                best = i;
            }
        }
        // the clustered point with minimal |f| among the cluster and tiny
        // neighbor distance wins over the isolated point 0
        assert_eq!(select_query(&scored.scores).unwrap(), best);
        assert_ne!(best, 0);
    }

    #[test]
    fn rand_is_seed_deterministic_and_uniform() {
        let f = fixture(16, 3);
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let qa = score(StrategyKind::Rand, &f.ctx(), &mut a).unwrap();
        let qb = score(StrategyKind::Rand, &f.ctx(), &mut b).unwrap();
        assert_eq!(
            select_query(&qa.scores).unwrap(),
            select_query(&qb.scores).unwrap()
        );

        // frequency oracle: 1e5 selections over 10 candidates, chi-squared
        // with 9 degrees of freedom at the 0.01 level
        let mut counts = [0usize; 10];
        let eligible: Vec<usize> = f.eligible.iter().copied().take(10).collect();
        assert_eq!(eligible.len(), 10);
        for draw in 0..100_000u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1_000_000 + draw);
            let ctx = ScoreContext {
                eligible: &eligible,
                ..f.ctx()
            };
            let q = score(StrategyKind::Rand, &ctx, &mut rng).unwrap();
            let chosen = select_query(&q.scores).unwrap();
            counts[eligible.iter().position(|&t| t == chosen).unwrap()] += 1;
        }
        let expected = 10_000.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 21.666, "chi-squared {chi2}");
    }

    #[test]
    fn rand_single_candidate() {
        let f = fixture(11, 3);
        let eligible = vec![f.eligible[0]];
        let ctx = ScoreContext {
            eligible: &eligible,
            ..f.ctx()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = score(StrategyKind::Rand, &ctx, &mut rng).unwrap();
        assert_eq!(select_query(&q.scores).unwrap(), eligible[0]);
    }

    #[test]
    fn rand_out_selects_predicted_outliers() {
        let f = fixture(25, 5);
        // one predicted outlier in the eligible set
        let mut decision = vec![-0.5; f.data.n()];
        decision[f.eligible[3]] = 0.4;
        let ctx = ScoreContext {
            decision: &decision,
            ..f.ctx()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = score(StrategyKind::RandOut, &ctx, &mut rng).unwrap();
        assert!(q.warnings.is_empty());
        assert_eq!(select_query(&q.scores).unwrap(), f.eligible[3]);

        // all predicted inliers: fallback path is taken and flagged
        let decision = vec![-0.5; f.data.n()];
        let ctx = ScoreContext {
            decision: &decision,
            ..f.ctx()
        };
        let q = score(StrategyKind::RandOut, &ctx, &mut rng).unwrap();
        assert!(!q.warnings.is_empty());
    }

    #[test]
    fn select_query_tie_breaks_to_lowest_index() {
        let iv = InformativenessVector {
            eligible: vec![4, 7, 9],
            scores: vec![0.1, 0.9, 0.9],
        };
        assert_eq!(select_query(&iv).unwrap(), 7);
        let rising = InformativenessVector {
            eligible: vec![1, 2, 3],
            scores: vec![0.1, 0.2, 0.3],
        };
        assert_eq!(select_query(&rising).unwrap(), 3);
        let empty = InformativenessVector {
            eligible: vec![],
            scores: vec![],
        };
        assert!(select_query(&empty).is_err());
    }

    /// Naive minimum-loss oracle built directly from the density module.
    fn naive_ml(
        x: &Matrix,
        in_idx: &[usize],
        out_idx: &[usize],
        gamma: f64,
        prior: f64,
        candidate: &[f64],
        modified: bool,
    ) -> f64 {
        // augment the matrix with the candidate as an extra row
        let mut rows: Vec<Vec<f64>> = (0..x.rows()).map(|i| x.row(i).to_vec()).collect();
        rows.push(candidate.to_vec());
        let aug = Matrix::from_rows(&rows).unwrap();
        let cand = x.rows();

        let mut aug_in = in_idx.to_vec();
        aug_in.push(cand);
        // case 1: mean leave-one-out density over the augmented inlier set
        let mut mean1 = 0.0;
        for &i in &aug_in {
            let rest: Vec<usize> = aug_in.iter().copied().filter(|&j| j != i).collect();
            let kde = kde_fit(&aug, rest, gamma).unwrap();
            mean1 += kde.eval(&aug, aug.row(i));
        }
        mean1 /= aug_in.len() as f64;
        let mut tau_in = mean1;

        // case 2: unaugmented leave-one-out mean
        let mut mean2 = 0.0;
        for &i in in_idx {
            let rest: Vec<usize> = in_idx.iter().copied().filter(|&j| j != i).collect();
            let kde = kde_fit(&aug, rest, gamma).unwrap();
            mean2 += kde.eval(&aug, aug.row(i));
        }
        mean2 /= in_idx.len() as f64;
        let mut tau_out = mean2;

        if !modified {
            let g_aug = kde_fit(&aug, aug_in.clone(), gamma).unwrap();
            let sub1: f64 = out_idx
                .iter()
                .map(|&o| g_aug.eval(&aug, aug.row(o)))
                .sum::<f64>()
                / out_idx.len() as f64;
            tau_in -= sub1;

            let g_in = kde_fit(&aug, in_idx.to_vec(), gamma).unwrap();
            let mut aug_out = out_idx.to_vec();
            aug_out.push(cand);
            let sub2: f64 = aug_out
                .iter()
                .map(|&o| g_in.eval(&aug, aug.row(o)))
                .sum::<f64>()
                / aug_out.len() as f64;
            tau_out -= sub2;
        }
        prior * tau_in + (1.0 - prior) * tau_out
    }

    #[test]
    fn ml_scorer_matches_naive_oracle() {
        let rows = vec![
            vec![0.1, 0.2],
            vec![0.3, 0.1],
            vec![0.2, 0.4],
            vec![0.8, 0.9],
            vec![0.9, 0.8],
            vec![0.5, 0.5],
            vec![0.4, 0.6],
        ];
        let x = Matrix::from_rows(&rows).unwrap();
        let in_idx = vec![0, 1, 2];
        let out_idx = vec![3, 4];
        let gamma = 1.4;
        for modified in [false, true] {
            let scorer =
                MlScorer::new(&x, in_idx.clone(), out_idx.clone(), gamma, 0.9, modified).unwrap();
            for candidate in [[0.5, 0.5], [0.15, 0.25], [0.85, 0.85]] {
                let fast = scorer.score_point(&x, &candidate);
                let oracle = naive_ml(&x, &in_idx, &out_idx, gamma, 0.9, &candidate, modified);
                assert!(
                    (fast - oracle).abs() < 1e-12,
                    "modified={modified} fast={fast} oracle={oracle}"
                );
            }
        }
    }

    #[test]
    fn ml_far_field_shrinks_augmented_mean() {
        // with every kernel term below 1e-12 the augmented leave-one-out
        // mean equals the unaugmented mean scaled by (n-1)/(n+1)
        let rows = vec![vec![0.1], vec![0.2], vec![0.35], vec![0.15]];
        let x = Matrix::from_rows(&rows).unwrap();
        let in_idx = vec![0, 1, 2, 3];
        let gamma = 2.0;
        let scorer = MlScorer::new(&x, in_idx.clone(), vec![], gamma, 1.0 - 1e-12, true).unwrap();
        // prior ~ 1 isolates the inlier case; candidate far away
        let far = [1e4];
        let tau = scorer.score_point(&x, &far);
        let n = in_idx.len() as f64;
        let expected = scorer.loo_mean * (n - 1.0) / (n + 1.0);
        assert!((tau - expected).abs() < 1e-9 * expected.abs().max(1e-12));
        // cross-check against the augmenting refit oracle
        let oracle = naive_ml(&x, &in_idx, &[], gamma, 1.0 - 1e-12, &far, true);
        assert!((tau - oracle).abs() < 1e-12);
    }

    #[test]
    fn ml_without_labeled_inliers_is_infeasible() {
        let x = Matrix::from_vec(2, 1, vec![0.1, 0.9]).unwrap();
        assert!(MlScorer::new(&x, vec![], vec![0], 1.0, 0.9, true).is_err());
    }

    #[test]
    fn feasibility_matrix_all_regimes() {
        use GateOutcome::*;
        let m = 5usize;
        // (labeled inliers, labeled outliers)
        let regimes = [(0usize, 0usize), (m, 0), (m, m)];
        for (row, &(l_in, l_out)) in regimes.iter().enumerate() {
            let facts = ScenarioFacts {
                labeled_inliers: l_in,
                labeled_outliers: l_out,
                attributes: m,
                pool_unlabeled: l_in == 0 && l_out == 0,
            };
            for kind in StrategyKind::all() {
                let verdict = feasibility_gate(
                    kind,
                    &facts,
                    SplitStrategy::Sf,
                    crate::learners::Learner::SvddNeg,
                );
                let expected: Option<GateOutcome> = match (row, kind) {
                    (0, StrategyKind::Mm)
                    | (0, StrategyKind::Emm)
                    | (0, StrategyKind::Eme)
                    | (0, StrategyKind::Ml)
                    | (0, StrategyKind::Hc) => None,
                    (1, StrategyKind::Ml) => Some(FeasibleWithModification),
                    _ => Some(Feasible),
                };
                match expected {
                    None => assert!(verdict.is_err(), "row {row} {kind:?}"),
                    Some(v) => assert_eq!(verdict.unwrap(), v, "row {row} {kind:?}"),
                }
            }
        }
    }

    #[test]
    fn gate_rejects_pu_with_si_and_svdd_off_si() {
        let facts = ScenarioFacts {
            labeled_inliers: 0,
            labeled_outliers: 0,
            attributes: 3,
            pool_unlabeled: true,
        };
        assert!(feasibility_gate(
            StrategyKind::Db,
            &facts,
            SplitStrategy::Si,
            crate::learners::Learner::SvddNeg
        )
        .is_err());
        assert!(feasibility_gate(
            StrategyKind::Db,
            &facts,
            SplitStrategy::Sf,
            crate::learners::Learner::Svdd
        )
        .is_err());
        let labeled = ScenarioFacts {
            labeled_inliers: 4,
            labeled_outliers: 0,
            attributes: 3,
            pool_unlabeled: false,
        };
        assert!(feasibility_gate(
            StrategyKind::Db,
            &labeled,
            SplitStrategy::Si,
            crate::learners::Learner::Svdd
        )
        .is_ok());
    }

    #[test]
    fn strategy_registry_round_trip() {
        for kind in StrategyKind::all() {
            assert_eq!(kind.name().parse::<StrategyKind>().unwrap(), kind);
        }
        assert!("nope".parse::<StrategyKind>().is_err());
    }

    proptest! {
        #[test]
        fn selection_invariant_under_monotone_transforms(
            seed in 0u64..200,
            scale in 0.1f64..10.0,
            shift in -5.0f64..5.0,
        ) {
            let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(3);
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64
            };
            let n = 2 + (seed as usize % 12);
            let scores: Vec<f64> = (0..n).map(|_| next() * 2.0 - 1.0).collect();
            let eligible: Vec<usize> = (0..n).collect();
            let base = InformativenessVector { eligible: eligible.clone(), scores: scores.clone() };
            // strictly increasing map: affine-positive plus exp component
            let mapped: Vec<f64> = scores.iter().map(|s| scale * s + shift + s.exp()).collect();
            let transformed = InformativenessVector { eligible, scores: mapped };
            prop_assert_eq!(select_query(&base).unwrap(), select_query(&transformed).unwrap());
        }
    }
}
