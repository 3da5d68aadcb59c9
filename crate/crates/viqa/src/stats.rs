//! Prediction-performance measures (PLCC, SROCC, RMSE) and fold-wise
//! evaluation reporting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, PredictorModel};
use crate::train::TrainSample;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("constant {0} input: correlation undefined")]
    ConstantInput(&'static str),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn check_pair(x: &[f64], y: &[f64], needed: usize) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < needed {
        return Err(StatsError::TooShort {
            needed,
            got: x.len(),
        });
    }
    Ok(())
}

/// Pearson linear correlation coefficient.
pub fn plcc(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y, 2)?;
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0f64;
    let mut sxx = 0.0f64;
    let mut syy = 0.0f64;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(StatsError::ConstantInput("x"));
    }
    if syy == 0.0 {
        return Err(StatsError::ConstantInput("y"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Fractional (mid) ranks, 1-based; tied values receive their average rank.
pub fn midranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("scores must not be NaN"));
    let mut ranks = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank-order correlation: Pearson correlation of mid-ranks. With
/// no ties the equivalent `1 - 6*sum(d^2) / (n(n^2-1))` shortcut is used.
pub fn srocc(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y, 2)?;
    let rx = midranks(x);
    let ry = midranks(y);
    let has_ties = |r: &[f64]| {
        let mut sorted: Vec<f64> = r.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sorted.windows(2).any(|w| w[0] == w[1])
    };
    if !has_ties(&rx) && !has_ties(&ry) {
        let n = x.len() as f64;
        let mut d2 = 0.0f64;
        for (&a, &b) in rx.iter().zip(&ry) {
            let d = a - b;
            d2 += d * d;
        }
        return Ok(1.0 - 6.0 * d2 / (n * (n * n - 1.0)));
    }
    plcc(&rx, &ry).map_err(|e| match e {
        StatsError::ConstantInput(which) => StatsError::ConstantInput(which),
        other => other,
    })
}

/// Root mean square error.
pub fn rmse(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y, 1)?;
    let acc: f64 = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| {
            let d = a - b;
            d * d
        })
        .sum();
    Ok((acc / x.len() as f64).sqrt())
}

/// Predicts every sample with the model and scores the predictions against
/// the stored opinion scores.
pub fn evaluate(
    model: &PredictorModel,
    samples: &[TrainSample],
) -> Result<(f64, f64, f64), EvalError> {
    let mut predicted = Vec::with_capacity(samples.len());
    let mut target = Vec::with_capacity(samples.len());
    for s in samples {
        predicted.push(model.predict(&s.dist_image)?.score);
        target.push(s.mos);
    }
    let p = plcc(&predicted, &target)?;
    let s = srocc(&predicted, &target)?;
    let r = rmse(&predicted, &target)?;
    Ok((p, s, r))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FoldStats {
    pub plcc: f64,
    pub srocc: f64,
    pub rmse: f64,
    pub n: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalAggregate {
    pub plcc: f64,
    pub srocc: f64,
    pub rmse: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalMetadata {
    /// `per_fold_mean` (default) or `pooled`.
    pub aggregation: String,
    /// Raw correlations are reported; no logistic fit is applied first.
    pub logistic_fit: bool,
}

/// Per-fold and aggregate measures, serialized as
/// `{folds:[{plcc,srocc,rmse,n}],aggregate:{...},metadata:{...}}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub folds: Vec<FoldStats>,
    pub aggregate: EvalAggregate,
    pub metadata: EvalMetadata,
}

impl EvalReport {
    /// Aggregates fold measures by their unweighted mean.
    pub fn from_folds(folds: Vec<FoldStats>) -> Self {
        let n = folds.len() as f64;
        let aggregate = EvalAggregate {
            plcc: folds.iter().map(|f| f.plcc).sum::<f64>() / n,
            srocc: folds.iter().map(|f| f.srocc).sum::<f64>() / n,
            rmse: folds.iter().map(|f| f.rmse).sum::<f64>() / n,
        };
        EvalReport {
            folds,
            aggregate,
            metadata: EvalMetadata {
                aggregation: "per_fold_mean".into(),
                logistic_fit: false,
            },
        }
    }

    /// Aggregate computed over predictions pooled across folds; per-fold
    /// rows are still reported.
    pub fn from_pooled(
        folds: Vec<FoldStats>,
        pooled_predictions: &[f64],
        pooled_targets: &[f64],
    ) -> Result<Self, StatsError> {
        let aggregate = EvalAggregate {
            plcc: plcc(pooled_predictions, pooled_targets)?,
            srocc: srocc(pooled_predictions, pooled_targets)?,
            rmse: rmse(pooled_predictions, pooled_targets)?,
        };
        Ok(EvalReport {
            folds,
            aggregate,
            metadata: EvalMetadata {
                aggregation: "pooled".into(),
                logistic_fit: false,
            },
        })
    }
}
