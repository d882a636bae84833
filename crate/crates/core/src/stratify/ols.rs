//! Ordinary least squares with an intercept.
//!
//! The solver goes through the SVD so that rank-deficient designs (a
//! duplicated feature column, collinear baselines) yield the minimum-norm
//! solution instead of failing.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::TargetKind;

/// Coefficients of a fitted linear predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl LinearFit {
    pub fn predict(&self, features: &[f64]) -> f64 {
        debug_assert_eq!(features.len(), self.coefficients.len());
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(features)
                .map(|(c, x)| c * x)
                .sum::<f64>()
    }
}

/// A linear risk predictor together with the context it was trained in.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskModel {
    pub target: TargetKind,
    pub fit: LinearFit,
    pub seed: u64,
    pub n_folds: usize,
    /// Membership kernel bandwidth the features were computed with.
    pub sigma: f64,
}

impl RiskModel {
    pub fn predict(&self, features: &[f64]) -> f64 {
        self.fit.predict(features)
    }
}

/// Least-squares fit of `targets` on `rows` plus an intercept. Requires at
/// least two more rows than features; rank deficiency falls back to the
/// minimum-norm solution.
pub fn fit_linear(rows: &[Vec<f64>], targets: &[f64]) -> Result<LinearFit> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::TooFewRows { rows: 0, features: 0, required: 2 });
    }
    let p = rows[0].len();
    if p == 0 {
        return Err(Error::InvalidParam("feature rows are empty".into()));
    }
    if targets.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} targets for {n} feature rows",
            targets.len()
        )));
    }
    let required = p + 2;
    if n < required {
        return Err(Error::TooFewRows { rows: n, features: p, required });
    }
    let mut design = DMatrix::zeros(n, p + 1);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "feature row {i} has {} entries, expected {p}",
                row.len()
            )));
        }
        for (j, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidParam(format!(
                    "feature ({i},{j}) = {v} is not finite"
                )));
            }
            design[(i, j)] = *v;
        }
        design[(i, p)] = 1.0;
    }
    for (i, y) in targets.iter().enumerate() {
        if !y.is_finite() {
            return Err(Error::InvalidParam(format!("target {i} = {y} is not finite")));
        }
    }

    let y = DVector::from_column_slice(targets);
    let svd = design.svd(true, true);
    let s_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    // Singular values this far below the largest are treated as zero,
    // which is what produces the minimum-norm solution.
    let eps = s_max * 1e-12;
    let beta = svd
        .solve(&y, eps)
        .map_err(|e| Error::InvalidParam(format!("least-squares solve failed: {e}")))?;
    let coefficients: Vec<f64> = beta.iter().take(p).copied().collect();
    let intercept = beta[p];
    if !intercept.is_finite() || coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidParam(
            "least-squares produced non-finite coefficients".into(),
        ));
    }
    Ok(LinearFit { coefficients, intercept })
}
