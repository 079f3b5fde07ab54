//! Evaluation of predicted fields against ground truth.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polyvector::{smoothness_energy, FieldError, PolyVectorField};
use crate::raster::RasterImage;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("ground truth has no defined pixels")]
    EmptyMask,
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Losses of a prediction, averaged per defined ground-truth pixel.
///
/// `regularized = mse + γ · smoothness / defined_pixels`; the raw sums are
/// carried alongside for other normalization conventions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mse: f64,
    pub smoothness: f64,
    pub regularized: f64,
    pub gamma: f64,
    pub defined_pixels: usize,
    /// Unnormalized `Σ ‖c − c*‖²` over the ground-truth mask.
    pub alignment_sum: f64,
    /// Unnormalized `alignment_sum + γ · smoothness`.
    pub regularized_sum: f64,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serialization cannot fail")
    }
}

fn squared_errors(pred: &PolyVectorField, gt: &PolyVectorField) -> Result<Vec<f64>, MetricsError> {
    gt.check_dims(pred)?;
    if gt.mask().is_empty() {
        return Err(MetricsError::EmptyMask);
    }
    Ok(gt
        .mask()
        .data()
        .iter()
        .zip(pred.data().iter().zip(gt.data()))
        .map(|(&defined, (p, g))| {
            if defined {
                p.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum()
            } else {
                0.0
            }
        })
        .collect())
}

/// Mean squared channel error over the ground truth's defined pixels.
pub fn mse(pred: &PolyVectorField, gt: &PolyVectorField) -> Result<f64, MetricsError> {
    let errors = squared_errors(pred, gt)?;
    let n = gt.defined_count();
    Ok(errors.iter().sum::<f64>() / (4 * n) as f64)
}

pub fn regularized_loss(
    pred: &PolyVectorField,
    gt: &PolyVectorField,
    gamma: f64,
) -> Result<EvalReport, MetricsError> {
    let errors = squared_errors(pred, gt)?;
    let n = gt.defined_count();
    let alignment_sum: f64 = errors.iter().sum();
    let mse = alignment_sum / (4 * n) as f64;
    let smoothness = smoothness_energy(pred);
    Ok(EvalReport {
        mse,
        smoothness,
        regularized: mse + gamma * smoothness / n as f64,
        gamma,
        defined_pixels: n,
        alignment_sum,
        regularized_sum: alignment_sum + gamma * smoothness,
    })
}

/// Per-pixel squared error, scaled so the largest error is 1.
pub fn error_heatmap(pred: &PolyVectorField, gt: &PolyVectorField) -> Result<RasterImage, MetricsError> {
    let errors = squared_errors(pred, gt)?;
    let max = errors.iter().cloned().fold(0.0, f64::max);
    let data = if max > 0.0 {
        errors.iter().map(|e| e / max).collect()
    } else {
        vec![0.0; errors.len()]
    };
    Ok(RasterImage::from_data(gt.width(), gt.height(), data).expect("matching dimensions"))
}
