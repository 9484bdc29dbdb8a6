//! Gaussian kernel density estimation with leave-one-out evaluation.
//!
//! Bandwidth is tied to the base learner's RBF width: a kernel
//! `exp(-gamma ||x - x'||^2)` normalized by `(gamma/pi)^(M/2)` integrates to
//! one, so density ratios are dimensionless and comparable across feature
//! counts. Evaluations at dataset points reuse the cached Gram matrix.

use crate::error::{Error, Result};
use crate::kernel::GramMatrix;
use crate::matrix::{squared_distance, Matrix};

/// Kernel density estimate over a support subset of a dataset.
#[derive(Debug, Clone)]
pub struct DensityModel {
    support: Vec<usize>,
    gamma: f64,
    normalizer: f64,
}

/// Fit a KDE on the rows of `x` listed in `support`.
pub fn kde_fit(x: &Matrix, support: Vec<usize>, gamma: f64) -> Result<DensityModel> {
    if support.is_empty() {
        return Err(Error::InfeasibleScenario(
            "kernel density estimation needs a nonempty support".into(),
        ));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "gamma must be positive and finite, got {gamma}"
        )));
    }
    let m = x.cols() as f64;
    Ok(DensityModel {
        support,
        gamma,
        normalizer: (gamma / std::f64::consts::PI).powf(m / 2.0),
    })
}

impl DensityModel {
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn support_len(&self) -> usize {
        self.support.len()
    }

    /// Peak value of a single normalized Gaussian component.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// Density at an arbitrary point.
    pub fn eval(&self, x: &Matrix, point: &[f64]) -> f64 {
        let mut acc = 0.0;
        for &s in &self.support {
            acc += (-self.gamma * squared_distance(x.row(s), point)).exp();
        }
        self.normalizer * acc / self.support.len() as f64
    }

    /// Density at dataset row `i`, read from the cached Gram matrix.
    ///
    /// Valid when the Gram matrix was built with the same gamma as this
    /// model, which is how the pipeline always sets it up.
    pub fn eval_index(&self, gram: &GramMatrix, i: usize) -> f64 {
        let row = gram.row(i);
        let mut acc = 0.0;
        for &s in &self.support {
            acc += row[s];
        }
        self.normalizer * acc / self.support.len() as f64
    }

    /// Leave-one-out density at the support point in position `pos`:
    /// the density of `support \ {pos}` evaluated at that point.
    pub fn loo_eval_index(&self, gram: &GramMatrix, pos: usize) -> Result<f64> {
        let n = self.support.len();
        if n < 2 {
            return Err(Error::InfeasibleScenario(
                "leave-one-out needs at least two support points".into(),
            ));
        }
        let i = self.support[pos];
        let row = gram.row(i);
        let mut acc = 0.0;
        for (p, &s) in self.support.iter().enumerate() {
            if p != pos {
                acc += row[s];
            }
        }
        Ok(self.normalizer * acc / (n - 1) as f64)
    }
}
