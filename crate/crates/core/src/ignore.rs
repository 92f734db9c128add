//! Overlap-based down-weighting of negative proposals: a background proposal
//! whose box overlaps an external ground-truth box above an IoU threshold is
//! likely an unannotated object, so its loss weight is reduced to `beta`.

use serde::{Deserialize, Serialize};

use crate::dataset::SampleLabel;
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IgnoreConfig {
    /// Strict lower bound on overlap before a negative is down-weighted.
    pub iou_threshold: f64,
    /// Weight applied to down-weighted negatives.
    pub beta: f64,
    /// Global scale on the classification loss, compensating the average
    /// weight reduction.
    pub head_loss_scale: f64,
}

impl Default for IgnoreConfig {
    fn default() -> Self {
        IgnoreConfig {
            iou_threshold: 0.5,
            beta: 0.5,
            head_loss_scale: 2.0,
        }
    }
}

impl IgnoreConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::invalid_input("iou_threshold must be in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::invalid_input("beta must be in [0, 1]"));
        }
        if !(self.head_loss_scale.is_finite() && self.head_loss_scale > 0.0) {
            return Err(Error::invalid_input("head_loss_scale must be positive"));
        }
        Ok(())
    }
}

/// Per-sample loss weights: `beta` for background proposals whose max IoU
/// with any external box strictly exceeds the threshold, 1.0 otherwise.
/// Foreground proposals always get 1.0.
pub fn ignore_sample_weights<R: Real>(
    samples: &[(BBox<R>, SampleLabel)],
    external_boxes: &[BBox<R>],
    cfg: &IgnoreConfig,
) -> Result<Vec<R>> {
    cfg.validate()?;
    let threshold = R::from_f64_lossy(cfg.iou_threshold);
    let beta = R::from_f64_lossy(cfg.beta);
    Ok(samples
        .iter()
        .map(|(bbox, label)| {
            if label.is_background()
                && external_boxes.iter().any(|ext| iou(bbox, ext) > threshold)
            {
                beta
            } else {
                R::one()
            }
        })
        .collect())
}
