//! Reconstruction metrics and the extractor × reconstructor matrix.

pub mod matrix;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActionTable, Policy, StateId};

pub use matrix::{
    run_cross_matrix, CellStats, CrossMatrix, CrossMatrixConfig, MatrixCell, RestartScores,
    UserModel,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionScore {
    pub accuracy: f64,
    pub value_diff_raw: f64,
    pub n_unseen: usize,
}

/// Fraction of `unseen` states whose predicted action is optimal. With no
/// unseen states there is nothing to get wrong, so the result is 1.
pub fn score_accuracy(policy_star: &Policy, predictions: &ActionTable, unseen: &[StateId]) -> Result<f64> {
    let mut correct = 0usize;
    for &s in unseen {
        let a = predictions
            .get(s)
            .ok_or(Error::MissingPrediction { state: s.0 })?;
        if policy_star.is_optimal(s, a) {
            correct += 1;
        }
    }
    if unseen.is_empty() {
        return Ok(1.0);
    }
    Ok(correct as f64 / unseen.len() as f64)
}

pub fn score_value_diff(value_star: f64, value_hat: f64) -> f64 {
    (value_star - value_hat).abs()
}

/// Affine map of `values` onto [0, 1]; constant input maps to zeros.
pub fn minmax_scale(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / span).collect()
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
