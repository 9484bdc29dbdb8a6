//! RBF kernel evaluation, Gram-matrix caching and hyperparameter heuristics.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};

/// RBF kernel configuration, `k(x, x') = exp(-gamma * ||x - x'||^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub gamma: f64,
}

impl KernelConfig {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gamma must be positive and finite, got {gamma}"
            )));
        }
        Ok(Self { gamma })
    }
}

/// Cost parameters shared by the three learners.
///
/// `c` is the single SVDD cost, `c1` the cost of unlabeled/inlier slack,
/// `c2` the cost of labeled slack and `kappa` the margin trade-off used by
/// SSAD only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub kappa: f64,
}

impl CostConfig {
    pub fn new(c: f64, c1: f64, c2: f64, kappa: f64) -> Result<Self> {
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "c must lie in (0, 1], got {c}"
            )));
        }
        if !(c1 > 0.0) || !(c2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "costs must be positive, got c1={c1}, c2={c2}"
            )));
        }
        if kappa < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "kappa must be nonnegative, got {kappa}"
            )));
        }
        Ok(Self { c, c1, c2, kappa })
    }

    pub fn with_kappa(mut self, kappa: f64) -> Result<Self> {
        if kappa < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "kappa must be nonnegative, got {kappa}"
            )));
        }
        self.kappa = kappa;
        Ok(self)
    }
}

/// RBF kernel value for a single pair of observations.
pub fn rbf(x: &[f64], x2: &[f64], cfg: KernelConfig) -> Result<f64> {
    if x.len() != x2.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: x2.len(),
        });
    }
    Ok((-cfg.gamma * squared_distance(x, x2)).exp())
}

/// Cached N x N kernel matrix.
///
/// Built once per (dataset, gamma) and shared read-only by the solver, the
/// density estimates and the per-iteration evaluation. Exactly symmetric
/// with an exact unit diagonal.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    n: usize,
    values: Vec<f64>,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// Materialize the full Gram matrix for `x` under the RBF kernel.
pub fn gram_matrix(x: &Matrix, cfg: KernelConfig) -> GramMatrix {
    let n = x.rows();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        values[i * n + i] = 1.0;
        for j in (i + 1)..n {
            let v = (-cfg.gamma * squared_distance(x.row(i), x.row(j))).exp();
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    GramMatrix { n, values }
}

/// Scott's rule of thumb mapped to an RBF width.
///
/// The bandwidth is `h = N^(-1/(M+4))` times the mean per-column sample
/// standard deviation; the returned width identifies the RBF kernel with a
/// Gaussian density kernel of bandwidth `h`, i.e. `gamma = 1 / (2 h^2)`.
pub fn gamma_scott(x: &Matrix) -> Result<f64> {
    let n = x.rows();
    let m = x.cols();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "bandwidth selection requires at least two observations".into(),
        ));
    }
    let mut sigma_sum = 0.0;
    for j in 0..m {
        let mut mean = 0.0;
        for i in 0..n {
            mean += x.get(i, j);
        }
        mean /= n as f64;
        let mut ss = 0.0;
        for i in 0..n {
            let d = x.get(i, j) - mean;
            ss += d * d;
        }
        sigma_sum += (ss / (n as f64 - 1.0)).sqrt();
    }
    let sigma_mean = sigma_sum / m as f64;
    let h = (n as f64).powf(-1.0 / (m as f64 + 4.0)) * sigma_mean;
    if h <= 0.0 {
        return Err(Error::InvalidParameter(
            "all columns are constant, bandwidth is zero".into(),
        ));
    }
    Ok(1.0 / (2.0 * h * h))
}

/// Cost initialization after Tax: `C = 1 / (N * expected_outlier_fraction)`,
/// clamped into (0, 1]. `c1` and `c2` default to the same value.
pub fn cost_tax(n: usize, expected_outlier_fraction: f64) -> Result<CostConfig> {
    if !(expected_outlier_fraction > 0.0 && expected_outlier_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "expected outlier fraction must lie in (0, 1), got {expected_outlier_fraction}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let c = (1.0 / (n as f64 * expected_outlier_fraction)).min(1.0);
    CostConfig::new(c, c, c, 0.0)
}

/// Named gamma selection heuristics, `scott`, `wang` and `fixed:<value>`.
///
/// `wang` (self-adaptive data shifting) is a reserved slot: selecting it
/// yields an unsupported-heuristic error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum GammaHeuristic {
    Scott,
    Wang,
    Fixed(f64),
}

impl GammaHeuristic {
    pub fn resolve(&self, x: &Matrix) -> Result<f64> {
        match self {
            GammaHeuristic::Scott => gamma_scott(x),
            GammaHeuristic::Wang => Err(Error::UnsupportedHeuristic(
                "wang (self-adaptive data shifting) is not implemented".into(),
            )),
            GammaHeuristic::Fixed(v) => {
                KernelConfig::new(*v)?;
                Ok(*v)
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            GammaHeuristic::Scott => "scott".into(),
            GammaHeuristic::Wang => "wang".into(),
            GammaHeuristic::Fixed(v) => format!("fixed:{v}"),
        }
    }
}

impl FromStr for GammaHeuristic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scott" => Ok(GammaHeuristic::Scott),
            "wang" => Ok(GammaHeuristic::Wang),
            _ => {
                if let Some(v) = s.strip_prefix("fixed:") {
                    let value: f64 = v.parse().map_err(|_| Error::UnknownName {
                        kind: "gamma",
                        name: s.to_string(),
                    })?;
                    Ok(GammaHeuristic::Fixed(value))
                } else {
                    Err(Error::UnknownName {
                        kind: "gamma",
                        name: s.to_string(),
                    })
                }
            }
        }
    }
}

impl From<GammaHeuristic> for String {
    fn from(h: GammaHeuristic) -> String {
        h.name()
    }
}

impl TryFrom<String> for GammaHeuristic {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}
