//! Ridge-regularized linear rating predictor over the 27 prompt features.
//!
//! Features are z-scored over the training rows; the intercept is not
//! penalized. With centered columns the intercept decouples and equals the
//! mean outcome, leaving `(ZᵀZ + λI) w = Zᵀ(y − ȳ)` for the weights.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::outcome::OutcomeSpec;
use crate::domain::{PromptFeatures, PROMPT_DIM};
use crate::error::{Error, Result};

/// Relative spread below which a training column counts as constant.
const CONSTANT_COLUMN_TOL: f64 = 1e-12;
/// Smallest acceptable ratio between Cholesky pivots.
const PIVOT_RATIO_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingModel {
    /// Coefficients on standardized features; zero for constant columns.
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub feature_mean: Vec<f64>,
    /// Population standard deviation per column; `None` marks a column that
    /// was constant in training and is ignored.
    pub feature_scale: Vec<Option<f64>>,
    pub ridge_lambda: f64,
    pub training_count: usize,
    pub outcome: OutcomeSpec,
}

impl RatingModel {
    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_scale)
            .map(|((v, m), s)| s.map_or(0.0, |s| (v - m) / s))
            .collect()
    }

    pub fn predict(&self, x: &PromptFeatures) -> f64 {
        self.predict_slice(x.as_slice())
    }

    pub fn predict_slice(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .standardize(x)
                .iter()
                .zip(&self.weights)
                .map(|(z, w)| z * w)
                .sum::<f64>()
    }

    /// Coefficients and intercept on the original feature scale.
    pub fn raw_coefficients(&self) -> (Vec<f64>, f64) {
        let mut b = self.intercept;
        let coefs: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_scale)
            .map(|((w, m), s)| match s {
                Some(s) => {
                    let c = w / s;
                    b -= c * m;
                    c
                }
                None => 0.0,
            })
            .collect();
        (coefs, b)
    }
}

/// Fit the rating predictor on `(prompt features, outcome)` rows.
pub fn fit_rating_model(
    rows: &[(PromptFeatures, f64)],
    lambda: f64,
    outcome: OutcomeSpec,
) -> Result<RatingModel> {
    if rows.is_empty() {
        return Err(Error::Validation("no training rows".into()));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Validation(format!(
            "ridge_lambda must be finite and non-negative, got {lambda}"
        )));
    }
    if let Some((_, y)) = rows.iter().find(|(_, y)| !y.is_finite()) {
        return Err(Error::Validation(format!("non-finite outcome {y}")));
    }
    let n = rows.len();
    let nf = n as f64;

    let mut mean = vec![0.0; PROMPT_DIM];
    for (x, _) in rows {
        for (m, v) in mean.iter_mut().zip(x.as_slice()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);

    let mut scale = Vec::with_capacity(PROMPT_DIM);
    for (j, &m) in mean.iter().enumerate() {
        let var = rows
            .iter()
            .map(|(x, _)| (x.as_slice()[j] - m).powi(2))
            .sum::<f64>()
            / nf;
        let sd = var.sqrt();
        scale.push((sd > CONSTANT_COLUMN_TOL * m.abs().max(1.0)).then_some(sd));
    }
    let active: Vec<usize> = (0..PROMPT_DIM).filter(|&j| scale[j].is_some()).collect();

    let y_mean = rows.iter().map(|(_, y)| y).sum::<f64>() / nf;
    let mut weights = vec![0.0; PROMPT_DIM];

    if !active.is_empty() {
        let k = active.len();
        let z = DMatrix::from_fn(n, k, |i, c| {
            let j = active[c];
            (rows[i].0.as_slice()[j] - mean[j]) / scale[j].unwrap()
        });
        let yc = DVector::from_iterator(n, rows.iter().map(|(_, y)| y - y_mean));
        let mut gram = z.transpose() * &z;
        for d in 0..k {
            gram[(d, d)] += lambda;
        }
        let rhs = z.transpose() * yc;
        let chol = gram.clone().cholesky().ok_or_else(|| degenerate(lambda))?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d * d), hi.max(d * d)));
        if !(lo > PIVOT_RATIO_TOL * hi) {
            return Err(degenerate(lambda));
        }
        let w = chol.solve(&rhs);
        for (c, &j) in active.iter().enumerate() {
            weights[j] = w[c];
        }
    }

    if weights.iter().any(|w| !w.is_finite()) {
        return Err(degenerate(lambda));
    }

    Ok(RatingModel {
        weights,
        intercept: y_mean,
        feature_mean: mean,
        feature_scale: scale,
        ridge_lambda: lambda,
        training_count: n,
        outcome,
    })
}

fn degenerate(lambda: f64) -> Error {
    if lambda == 0.0 {
        Error::DegenerateDesign(
            "design matrix is rank deficient; set ridge_lambda > 0 (default 1.0)".into(),
        )
    } else {
        Error::DegenerateDesign(format!("normal equations ill-conditioned at lambda={lambda}"))
    }
}
