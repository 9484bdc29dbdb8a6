//! SVDD-family one-class learners fitted by a working-set dual solver.
//!
//! All three learners are minimum-enclosing-ball programs in kernel feature
//! space and share one dual structure. With signs `s_i` (+1 for unlabeled
//! and labeled-inlier points, -1 for labeled outliers) and per-point cost
//! bounds `C_i`, the solver minimizes
//!
//! ```text
//! F(alpha) = sum_ij s_i s_j alpha_i alpha_j K_ij - sum_i s_i alpha_i K_ii
//! s.t.  sum_i s_i alpha_i = 1,    0 <= alpha_i <= C_i,
//!       sum_{i in labeled} alpha_i = kappa      (SSAD only)
//! ```
//!
//! which is the negated dual of the primal ball programs. The second
//! equality is the stationarity condition of the SSAD margin variable: the
//! margin appears with weight `kappa` in the objective and with coefficient
//! one in every labeled constraint, so the labeled dual mass must equal
//! `kappa`. Its multiplier is the margin itself, which is how the fit
//! recovers it. The ball center is the kernel expansion
//! `a = sum_i s_i alpha_i phi(x_i)`.
//!
//! The solver moves along elementary feasible directions: pairs that trade
//! mass inside one constraint group, plus (for SSAD) a three-point exchange
//! between an unlabeled point, a labeled inlier and a labeled outlier,
//! which spans the remaining feasible direction across groups. Each step
//! picks the direction with the largest optimality violation (ties broken
//! by lowest index) and does an exact clipped line search. Termination is
//! by gradient-space violation; a primal KKT certificate is recomputed from
//! scratch after every fit and stored on the model.

use serde::{Deserialize, Serialize};

use crate::data::{Label, LabelStatus};
use crate::error::{Error, Result};
use crate::kernel::{CostConfig, GramMatrix, KernelConfig};
use crate::matrix::{squared_distance, Matrix};

/// The three base learners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Learner {
    /// Unsupervised ball around all training points, cost `c`.
    Svdd,
    /// Labeled outliers constrained outside the ball, costs `c1`/`c2`;
    /// labeled inliers are treated like unlabeled points.
    SvddNeg,
    /// Labeled points pushed a margin away from the boundary, weighted by
    /// `kappa`.
    Ssad,
}

impl Learner {
    pub fn name(&self) -> &'static str {
        match self {
            Learner::Svdd => "svdd",
            Learner::SvddNeg => "svddneg",
            Learner::Ssad => "ssad",
        }
    }
}

impl std::str::FromStr for Learner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svdd" => Ok(Learner::Svdd),
            "svddneg" => Ok(Learner::SvddNeg),
            "ssad" => Ok(Learner::Ssad),
            _ => Err(Error::UnknownName {
                kind: "learner",
                name: s.into(),
            }),
        }
    }
}

/// Solver options.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitOptions {
    /// Tolerance of the primal KKT certificate.
    pub kkt_tol: f64,
    /// Maximum number of working-set steps.
    pub max_steps: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-6,
            max_steps: 100_000,
        }
    }
}

/// Margin from the box bounds below which a dual variable counts as bound.
const BOX_MARGIN: f64 = 1e-8;

/// A fitted ball model.
///
/// The center is implicit as the kernel expansion over `train_idx` with
/// coefficients `alpha * signs`. Slack variables are not stored; audits
/// recover them from the decision function on demand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub learner: Learner,
    pub alpha: Vec<f64>,
    pub signs: Vec<f64>,
    pub radius_sq: f64,
    /// SSAD's recovered margin variable; 0 for the other learners.
    pub margin: f64,
    pub kernel: KernelConfig,
    pub costs: CostConfig,
    pub train_idx: Vec<usize>,
    /// Cached squared norm of the ball center.
    pub center_sq_norm: f64,
    /// Maximum primal/dual violation measured after the fit.
    pub kkt_residual: f64,
}

impl TrainedModel {
    pub fn radius(&self) -> f64 {
        self.radius_sq.sqrt()
    }

    /// Maximized dual objective of the fitted program.
    pub fn dual_objective(&self) -> f64 {
        // sum_i s_i alpha_i K_ii - ||a||^2, with unit kernel diagonal
        let linear: f64 = self
            .alpha
            .iter()
            .zip(&self.signs)
            .map(|(a, s)| a * s)
            .sum();
        linear - self.center_sq_norm
    }

    /// Distance to the ball boundary for an arbitrary point; positive means
    /// outside.
    pub fn decision_value(&self, x: &Matrix, point: &[f64]) -> f64 {
        let mut cross = 0.0;
        for (k, &idx) in self.train_idx.iter().enumerate() {
            if self.alpha[k] == 0.0 {
                continue;
            }
            let kernel = (-self.kernel.gamma * squared_distance(x.row(idx), point)).exp();
            cross += self.signs[k] * self.alpha[k] * kernel;
        }
        let dist_sq = (1.0 - 2.0 * cross + self.center_sq_norm).max(0.0);
        dist_sq.sqrt() - self.radius()
    }

    /// Decision values for dataset rows, using the cached Gram matrix.
    pub fn decision_values_indexed(&self, gram: &GramMatrix, targets: &[usize]) -> Vec<f64> {
        let radius = self.radius();
        targets
            .iter()
            .map(|&t| {
                let row = gram.row(t);
                let mut cross = 0.0;
                for (k, &idx) in self.train_idx.iter().enumerate() {
                    if self.alpha[k] == 0.0 {
                        continue;
                    }
                    cross += self.signs[k] * self.alpha[k] * row[idx];
                }
                let dist_sq = (1.0 - 2.0 * cross + self.center_sq_norm).max(0.0);
                dist_sq.sqrt() - radius
            })
            .collect()
    }

    pub fn predict(&self, x: &Matrix, point: &[f64]) -> Label {
        if self.decision_value(x, point) > 0.0 {
            Label::Outlier
        } else {
            Label::Inlier
        }
    }
}

/// Constraint group of a training point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Group {
    /// Only the unit-mass constraint applies (any sign).
    Free,
    /// Labeled inlier under the labeled-mass constraint (SSAD).
    LabeledIn,
    /// Labeled outlier under the labeled-mass constraint (SSAD).
    LabeledOut,
}

struct SolverProblem<'a> {
    gram: &'a GramMatrix,
    train_idx: &'a [usize],
    sign: Vec<f64>,
    upper: Vec<f64>,
    group: Vec<Group>,
    /// Labeled-mass target; `None` when only the unit constraint applies.
    kappa: Option<f64>,
}

/// Fit a learner on the training rows `train_idx` of a dataset whose Gram
/// matrix is `gram`. `status` gives the pool status of each training point.
pub fn fit(
    learner: Learner,
    gram: &GramMatrix,
    train_idx: &[usize],
    status: &[LabelStatus],
    kernel: KernelConfig,
    costs: CostConfig,
    options: &FitOptions,
) -> Result<TrainedModel> {
    if train_idx.is_empty() {
        return Err(Error::InvalidParameter("empty training set".into()));
    }
    if status.len() != train_idx.len() {
        return Err(Error::DimensionMismatch {
            expected: train_idx.len(),
            actual: status.len(),
        });
    }

    let n = train_idx.len();
    let mut sign = vec![1.0; n];
    let mut upper = vec![0.0; n];
    let mut group = vec![Group::Free; n];
    let mut labeled_count = 0usize;
    for i in 0..n {
        match learner {
            Learner::Svdd => upper[i] = costs.c,
            Learner::SvddNeg => match status[i] {
                LabelStatus::LabeledOutlier => {
                    sign[i] = -1.0;
                    upper[i] = costs.c2;
                }
                _ => upper[i] = costs.c1,
            },
            Learner::Ssad => match status[i] {
                LabelStatus::Unlabeled => upper[i] = costs.c1,
                LabelStatus::LabeledInlier => {
                    upper[i] = costs.c2;
                    group[i] = Group::LabeledIn;
                    labeled_count += 1;
                }
                LabelStatus::LabeledOutlier => {
                    sign[i] = -1.0;
                    upper[i] = costs.c2;
                    group[i] = Group::LabeledOut;
                    labeled_count += 1;
                }
            },
        }
    }
    // Without labeled points the margin has nothing to act on and SSAD
    // degenerates to the plain ball on the unlabeled mass.
    let kappa = if learner == Learner::Ssad && labeled_count > 0 {
        Some(costs.kappa)
    } else {
        for g in group.iter_mut() {
            *g = Group::Free;
        }
        None
    };

    let problem = SolverProblem {
        gram,
        train_idx,
        sign,
        upper,
        group,
        kappa,
    };
    solve(learner, &problem, kernel, costs, options)
}

fn solve(
    learner: Learner,
    p: &SolverProblem,
    kernel: KernelConfig,
    costs: CostConfig,
    options: &FitOptions,
) -> Result<TrainedModel> {
    let n = p.train_idx.len();
    let mut alpha = initial_point(p)?;

    // ka[i] = sum_j s_j alpha_j K(i, j), maintained incrementally
    let mut ka = vec![0.0; n];
    for j in 0..n {
        if alpha[j] == 0.0 {
            continue;
        }
        let row = p.gram.row(p.train_idx[j]);
        let w = p.sign[j] * alpha[j];
        for i in 0..n {
            ka[i] += w * row[p.train_idx[i]];
        }
    }

    // gradient of F at i is sign[i] * (2 ka[i] - 1) for the unit diagonal
    let grad = |ka: &[f64], i: usize| p.sign[i] * (2.0 * ka[i] - 1.0);

    let inner_tol = options.kkt_tol * 0.1;
    let mut converged = false;
    let mut last_violation = f64::INFINITY;
    for _ in 0..options.max_steps {
        let Some(step) = select_direction(p, &alpha, &ka, grad) else {
            converged = true;
            last_violation = 0.0;
            break;
        };
        last_violation = step.violation;
        if step.violation <= inner_tol {
            converged = true;
            break;
        }

        // exact line search along the chosen direction, clipped to the box
        let mut deriv = 0.0;
        let mut curvature = 0.0;
        for &(i, d) in &step.entries {
            deriv += d * grad(&ka, i);
        }
        for &(i, di) in &step.entries {
            for &(j, dj) in &step.entries {
                curvature +=
                    di * dj * p.sign[i] * p.sign[j] * p.gram.get(p.train_idx[i], p.train_idx[j]);
            }
        }
        let mut t_max = f64::INFINITY;
        for &(i, d) in &step.entries {
            let room = if d > 0.0 {
                (p.upper[i] - alpha[i]) / d
            } else {
                alpha[i] / -d
            };
            t_max = t_max.min(room);
        }
        let t = if curvature > 1e-300 {
            (-deriv / (2.0 * curvature)).min(t_max)
        } else {
            t_max
        };
        if !(t > 0.0) || !t.is_finite() {
            // no usable progress along the best direction
            converged = step.violation <= options.kkt_tol;
            break;
        }
        for &(i, d) in &step.entries {
            let mut v = alpha[i] + d * t;
            // snap onto the box so bound tests stay exact
            if v <= 1e-15 {
                v = 0.0;
            } else if v >= p.upper[i] - 1e-15 {
                v = p.upper[i];
            }
            alpha[i] = v;
        }
        for &(i, d) in &step.entries {
            let row = p.gram.row(p.train_idx[i]);
            let w = p.sign[i] * d * t;
            for k in 0..n {
                ka[k] += w * row[p.train_idx[k]];
            }
        }
    }
    if !converged {
        return Err(Error::SolverDidNotConverge {
            steps: options.max_steps,
            violation: last_violation,
        });
    }

    // center norm from the maintained expansion
    let mut center_sq_norm = 0.0;
    for i in 0..n {
        center_sq_norm += p.sign[i] * alpha[i] * ka[i];
    }

    let (radius_sq, margin) = recover_radius_and_margin(p, &alpha, &ka, center_sq_norm, grad);

    let model = TrainedModel {
        learner,
        alpha,
        signs: p.sign.clone(),
        radius_sq,
        margin,
        kernel,
        costs,
        train_idx: p.train_idx.to_vec(),
        center_sq_norm,
        kkt_residual: 0.0,
    };
    let residual = kkt_residual(&model, p, &ka);
    if residual > options.kkt_tol {
        if std::env::var_os("OCAL_DEBUG_KKT").is_some() {
            eprintln!(
                "kkt fail: residual={residual:.6e} last_violation={last_violation:.6e} \
                 r2={} margin={} |a|2={} alpha={:?}",
                model.radius_sq, model.margin, model.center_sq_norm, model.alpha
            );
            for i in 0..p.train_idx.len() {
                let dist_sq = 1.0 - 2.0 * ka[i] + model.center_sq_norm;
                eprintln!(
                    "  i={i} group={:?} sign={} alpha={:.9} upper={} d2={:.9} gradF={:.9}",
                    p.group[i],
                    p.sign[i],
                    model.alpha[i],
                    p.upper[i],
                    dist_sq,
                    p.sign[i] * (2.0 * ka[i] - 1.0)
                );
            }
        }
        return Err(Error::KktCertificate {
            residual,
            tolerance: options.kkt_tol,
        });
    }
    Ok(TrainedModel {
        kkt_residual: residual,
        ..model
    })
}

/// Deterministic feasible starting point: group masses solved from the
/// equality constraints, spread uniformly within each group.
fn initial_point(p: &SolverProblem) -> Result<Vec<f64>> {
    let n = p.train_idx.len();
    let mut alpha = vec![0.0; n];
    match p.kappa {
        None => {
            let positives: Vec<usize> = (0..n).filter(|&i| p.sign[i] > 0.0).collect();
            let capacity: f64 = positives.iter().map(|&i| p.upper[i]).sum();
            if capacity < 1.0 - 1e-12 {
                return Err(Error::InfeasibleProgram(format!(
                    "total positive-class cost capacity {capacity:.4} cannot reach the unit \
                     mass constraint; increase the cost parameter"
                )));
            }
            let value = 1.0 / positives.len() as f64;
            if value <= p.upper[positives[0]] {
                for &i in &positives {
                    alpha[i] = value;
                }
            } else {
                let mut remaining = 1.0;
                for &i in &positives {
                    let v = p.upper[i].min(remaining);
                    alpha[i] = v;
                    remaining -= v;
                }
            }
        }
        Some(kappa) => {
            let of = |g: Group| -> Vec<usize> { (0..n).filter(|&i| p.group[i] == g).collect() };
            let u = of(Group::Free);
            let l_in = of(Group::LabeledIn);
            let l_out = of(Group::LabeledOut);
            let cap = |v: &Vec<usize>| -> f64 { v.iter().map(|&i| p.upper[i]).sum() };
            let (cap_u, cap_in, cap_out) = (cap(&u), cap(&l_in), cap(&l_out));
            // mass_in in [lo, hi]; mass_out = kappa - mass_in;
            // mass_u = 1 + kappa - 2 * mass_in
            let lo = (kappa - cap_out)
                .max(0.0)
                .max((1.0 + kappa - cap_u) / 2.0);
            let hi = kappa.min(cap_in).min((1.0 + kappa) / 2.0);
            if lo > hi + 1e-12 {
                return Err(Error::InfeasibleProgram(format!(
                    "no feasible dual point: labeled capacity in={cap_in:.4} out={cap_out:.4} \
                     unlabeled={cap_u:.4} cannot satisfy margin weight kappa={kappa} with unit \
                     mass"
                )));
            }
            let mass_in = lo.min(hi);
            let mass_out = kappa - mass_in;
            let mass_u = 1.0 + kappa - 2.0 * mass_in;
            for (idx_set, mass) in [(&u, mass_u), (&l_in, mass_in), (&l_out, mass_out)] {
                if idx_set.is_empty() {
                    continue;
                }
                let value = mass / idx_set.len() as f64;
                for &i in idx_set {
                    alpha[i] = value;
                }
            }
        }
    }
    Ok(alpha)
}

struct Direction {
    violation: f64,
    /// (index, coefficient) entries of the direction vector.
    entries: Vec<(usize, f64)>,
}

/// Extreme gradient readings of one constraint group.
#[derive(Clone, Copy)]
struct GroupScan {
    /// Smallest gradient over points that can gain mass, with its index.
    hi: Option<(f64, usize)>,
    /// Largest gradient over points that can lose mass, with its index.
    lo: Option<(f64, usize)>,
}

fn select_direction(
    p: &SolverProblem,
    alpha: &[f64],
    ka: &[f64],
    grad: impl Fn(&[f64], usize) -> f64,
) -> Option<Direction> {
    let n = alpha.len();
    match p.kappa {
        None => {
            // single constraint: compare phi = sign * grad across all points
            let mut best_up: Option<(f64, usize)> = None;
            let mut best_dn: Option<(f64, usize)> = None;
            for i in 0..n {
                let phi = p.sign[i] * grad(ka, i);
                let movable_up = if p.sign[i] > 0.0 {
                    alpha[i] < p.upper[i]
                } else {
                    alpha[i] > 0.0
                };
                let movable_dn = if p.sign[i] > 0.0 {
                    alpha[i] > 0.0
                } else {
                    alpha[i] < p.upper[i]
                };
                if movable_up && best_up.map_or(true, |(v, _)| phi < v) {
                    best_up = Some((phi, i));
                }
                if movable_dn && best_dn.map_or(true, |(v, _)| phi > v) {
                    best_dn = Some((phi, i));
                }
            }
            let (phi_up, i_up) = best_up?;
            let (phi_dn, i_dn) = best_dn?;
            if i_up == i_dn {
                return None;
            }
            Some(Direction {
                violation: phi_dn - phi_up,
                entries: vec![(i_up, p.sign[i_up]), (i_dn, -p.sign[i_dn])],
            })
        }
        Some(_) => {
            let scan = |g: Group| -> GroupScan {
                let mut hi: Option<(f64, usize)> = None;
                let mut lo: Option<(f64, usize)> = None;
                for i in 0..n {
                    if p.group[i] != g {
                        continue;
                    }
                    let value = grad(ka, i);
                    if alpha[i] < p.upper[i] && hi.map_or(true, |(v, _)| value < v) {
                        hi = Some((value, i));
                    }
                    if alpha[i] > 0.0 && lo.map_or(true, |(v, _)| value > v) {
                        lo = Some((value, i));
                    }
                }
                GroupScan { hi, lo }
            };
            let s_u = scan(Group::Free);
            let s_in = scan(Group::LabeledIn);
            let s_out = scan(Group::LabeledOut);

            let mut best: Option<Direction> = None;
            let mut consider = |violation: f64, entries: Vec<(usize, f64)>| {
                if violation > best.as_ref().map_or(0.0, |b| b.violation) {
                    best = Some(Direction {
                        violation,
                        entries,
                    });
                }
            };

            // mass trade inside one group
            for s in [&s_u, &s_in, &s_out] {
                if let (Some((hi, i)), Some((lo, j))) = (s.hi, s.lo) {
                    if i != j {
                        consider(lo - hi, vec![(i, 1.0), (j, -1.0)]);
                    }
                }
            }
            // three-point exchange across groups: shift labeled mass from
            // outliers to inliers (or back), compensated by unlabeled mass
            if let (Some((lo_u, u)), Some((hi_in, i)), Some((lo_out, o))) =
                (s_u.lo, s_in.hi, s_out.lo)
            {
                consider(
                    2.0 * lo_u - hi_in + lo_out,
                    vec![(u, -2.0), (i, 1.0), (o, -1.0)],
                );
            }
            if let (Some((hi_u, u)), Some((lo_in, i)), Some((hi_out, o))) =
                (s_u.hi, s_in.lo, s_out.hi)
            {
                consider(
                    lo_in - 2.0 * hi_u - hi_out,
                    vec![(u, 2.0), (i, -1.0), (o, 1.0)],
                );
            }
            best
        }
    }
}

/// Feasible range of a constraint multiplier; ends may be infinite.
#[derive(Debug, Clone, Copy)]
struct MultiplierRange {
    lo: f64,
    hi: f64,
}

impl MultiplierRange {
    fn unbounded() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    fn intersect(self, other: Self) -> Self {
        Self {
            lo: self.lo.max(other.lo),
            hi: self.hi.min(other.hi),
        }
    }

    fn shift(self, by: f64) -> Self {
        Self {
            lo: self.lo + by,
            hi: self.hi + by,
        }
    }

    fn pick(self) -> f64 {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => 0.5 * (self.lo + self.hi),
            (true, false) => self.lo,
            (false, true) => self.hi,
            (false, false) => 0.0,
        }
    }
}

/// Feasible range for one group's constraint multiplier, read off the
/// gradient stationarity conditions. Interior support vectors pin the
/// multiplier, collapsing the range to their mean reading.
fn multiplier_range(
    readings: &[(f64, f64, f64)], // (box coordinate, upper bound, gradient)
) -> MultiplierRange {
    let mut interior_sum = 0.0;
    let mut interior_count = 0usize;
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for &(alpha, upper, g) in readings {
        if alpha <= BOX_MARGIN {
            hi = hi.min(g);
        } else if alpha >= upper - BOX_MARGIN {
            lo = lo.max(g);
        } else {
            interior_sum += g;
            interior_count += 1;
        }
    }
    if interior_count > 0 {
        MultiplierRange::point(interior_sum / interior_count as f64)
    } else {
        MultiplierRange { lo, hi }
    }
}

/// Recover the squared radius (and SSAD's margin) from the constraint
/// multipliers.
///
/// Every gradient reading equals `sign * (||a||^2 - d_i^2)`, so interior
/// support vectors pin the multipliers exactly: unlabeled points sit on the
/// ball, labeled inliers a margin inside, labeled outliers a margin
/// outside. For the single-constraint learners this reduces to the mean
/// squared distance of interior support vectors, with the feasible-interval
/// midpoint as fallback when every vector is at a bound.
fn recover_radius_and_margin(
    p: &SolverProblem,
    alpha: &[f64],
    ka: &[f64],
    center_sq_norm: f64,
    grad: impl Fn(&[f64], usize) -> f64,
) -> (f64, f64) {
    let n = alpha.len();
    match p.kappa {
        None => {
            // lambda readings are sign * grad. For negative-sign points the
            // box roles flip: alpha at zero bounds lambda from below, alpha
            // at cost from above, so their box coordinate is mirrored.
            let readings: Vec<(f64, f64, f64)> = (0..n)
                .map(|i| {
                    let coordinate = if p.sign[i] > 0.0 {
                        alpha[i]
                    } else {
                        p.upper[i] - alpha[i]
                    };
                    (coordinate, p.upper[i], p.sign[i] * grad(ka, i))
                })
                .collect();
            let lambda = multiplier_range(&readings).pick();
            ((center_sq_norm - lambda).max(0.0), 0.0)
        }
        Some(_) => {
            // theta_u = lambda, theta_in = lambda + mu, theta_out = mu - lambda
            let of = |g: Group| -> MultiplierRange {
                let readings: Vec<(f64, f64, f64)> = (0..n)
                    .filter(|&i| p.group[i] == g)
                    .map(|i| (alpha[i], p.upper[i], grad(ka, i)))
                    .collect();
                if readings.is_empty() {
                    MultiplierRange::unbounded()
                } else {
                    multiplier_range(&readings)
                }
            };
            let r_u = of(Group::Free);
            let r_in = of(Group::LabeledIn);
            let r_out = of(Group::LabeledOut);
            // the labeled ranges constrain 2 * lambda = theta_in - theta_out
            let from_labeled = MultiplierRange {
                lo: 0.5 * (r_in.lo - r_out.hi),
                hi: 0.5 * (r_in.hi - r_out.lo),
            };
            let lambda = r_u.intersect(from_labeled).pick();
            let mu = r_in
                .shift(-lambda)
                .intersect(r_out.shift(lambda))
                .pick();
            let radius_sq = (center_sq_norm - lambda).max(0.0);
            let margin = if mu.abs() <= 1e-9 { 0.0 } else { mu };
            (radius_sq, margin)
        }
    }
}

/// Maximum violation of dual feasibility, complementary slackness and the
/// primal constraints, measured in squared-distance units.
fn kkt_residual(model: &TrainedModel, p: &SolverProblem, ka: &[f64]) -> f64 {
    let n = model.alpha.len();
    let mut residual = 0.0f64;

    let mut signed_mass = 0.0;
    let mut labeled_mass = 0.0;
    for i in 0..n {
        signed_mass += p.sign[i] * model.alpha[i];
        if p.group[i] != Group::Free {
            labeled_mass += model.alpha[i];
        }
        residual = residual.max(-model.alpha[i]).max(model.alpha[i] - p.upper[i]);
    }
    residual = residual.max((signed_mass - 1.0).abs());
    if let Some(kappa) = p.kappa {
        residual = residual.max((labeled_mass - kappa).abs());
    }
    residual = residual.max(-model.radius_sq);

    for i in 0..n {
        // squared distance of training point i to the center
        let dist_sq = 1.0 - 2.0 * ka[i] + model.center_sq_norm;
        let target = match p.group[i] {
            Group::Free => {
                if p.sign[i] > 0.0 {
                    model.radius_sq
                } else {
                    model.radius_sq + model.margin
                }
            }
            Group::LabeledIn => model.radius_sq - model.margin,
            Group::LabeledOut => model.radius_sq + model.margin,
        };
        // sign +1: inside-constraint d^2 <= target (+ slack at the upper
        // bound); sign -1: outside-constraint d^2 >= target
        let inside = p.sign[i] > 0.0;
        let v = if model.alpha[i] <= BOX_MARGIN {
            if inside {
                dist_sq - target
            } else {
                target - dist_sq
            }
        } else if model.alpha[i] >= p.upper[i] - BOX_MARGIN {
            if inside {
                target - dist_sq
            } else {
                dist_sq - target
            }
        } else {
            (dist_sq - target).abs()
        };
        residual = residual.max(v);
    }
    residual
}
