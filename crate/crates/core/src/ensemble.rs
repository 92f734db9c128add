//! Detection result post-processing: frequency-aware re-scoring order,
//! score-floor/top-k filtering, and shared-category merging of result sets.
//!
//! Re-scoring sorts by `score + alpha(group)` without modifying the stored
//! scores, so a rare detection outranks a frequent one whenever its score
//! plus the rare offset exceeds the frequent score.
//!
//! Result files are JSON arrays of
//! `{"image_id", "category_id", "bbox": [x1, y1, x2, y2], "score"}` records;
//! merged output carries an additional `"source"` tag.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::real::Real;
use crate::taxonomy::{CategoryTable, Group};
use crate::CategoryId;

/// One detection; scores are confidences in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection<R: Real> {
    image_id: i64,
    bbox: BBox<R>,
    category: CategoryId,
    score: R,
    source: String,
}

impl<R: Real> Detection<R> {
    pub fn new(
        image_id: i64,
        bbox: BBox<R>,
        category: CategoryId,
        score: R,
        source: impl Into<String>,
    ) -> Result<Self> {
        if category == 0 {
            return Err(Error::invalid_input("detection category must be >= 1"));
        }
        if !(score.is_finite() && score >= R::zero() && score <= R::one()) {
            return Err(Error::invalid_input("detection score must be in [0, 1]"));
        }
        Ok(Detection {
            image_id,
            bbox,
            category,
            score,
            source: source.into(),
        })
    }

    pub fn image_id(&self) -> i64 {
        self.image_id
    }

    pub fn bbox(&self) -> &BBox<R> {
        &self.bbox
    }

    pub fn category(&self) -> CategoryId {
        self.category
    }

    pub fn score(&self) -> R {
        self.score
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RescoreConfig {
    pub alpha_rare: f64,
    pub alpha_common: f64,
    pub alpha_frequent: f64,
    pub top_k: usize,
    pub score_floor: f64,
}

impl Default for RescoreConfig {
    fn default() -> Self {
        RescoreConfig {
            alpha_rare: 0.1,
            alpha_common: 0.05,
            alpha_frequent: 0.0,
            top_k: 300,
            score_floor: 0.0,
        }
    }
}

impl RescoreConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = self.alpha_rare.is_finite()
            && self.alpha_common.is_finite()
            && self.alpha_frequent.is_finite()
            && self.score_floor.is_finite();
        if !finite {
            return Err(Error::invalid_input("rescore parameters must be finite"));
        }
        if !(self.alpha_rare >= self.alpha_common && self.alpha_common >= self.alpha_frequent) {
            return Err(Error::invalid_input(
                "alphas must satisfy rare >= common >= frequent",
            ));
        }
        if self.top_k == 0 {
            return Err(Error::invalid_input("top_k must be >= 1"));
        }
        Ok(())
    }

    pub fn alpha_for(&self, group: Group) -> f64 {
        match group {
            Group::Rare => self.alpha_rare,
            Group::Common => self.alpha_common,
            Group::Frequent => self.alpha_frequent,
        }
    }
}

/// Sorts detections by descending `score + alpha(group)`. Raw scores are not
/// modified. Ties break by higher raw score, then lower category id, then
/// input position, making the order total and deterministic.
pub fn rescore_order<R: Real>(
    detections: Vec<Detection<R>>,
    table: &CategoryTable,
    cfg: &RescoreConfig,
) -> Result<Vec<Detection<R>>> {
    cfg.validate()?;
    let mut keyed: Vec<(R, usize, Detection<R>)> = detections
        .into_iter()
        .enumerate()
        .map(|(idx, det)| {
            let group = table.group(det.category)?;
            let key = det.score + R::from_f64_lossy(cfg.alpha_for(group));
            Ok((key, idx, det))
        })
        .collect::<Result<_>>()?;
    keyed.sort_by(|(ka, ia, da), (kb, ib, db)| {
        kb.partial_cmp(ka)
            .unwrap_or(Ordering::Equal)
            .then_with(|| db.score.partial_cmp(&da.score).unwrap_or(Ordering::Equal))
            .then_with(|| da.category.cmp(&db.category))
            .then_with(|| ia.cmp(ib))
    });
    Ok(keyed.into_iter().map(|(_, _, det)| det).collect())
}

/// Drops detections scoring below the floor, then keeps the first `top_k`.
/// The input is expected to be ordered already.
pub fn filter_top_k<R: Real>(ordered: Vec<Detection<R>>, cfg: &RescoreConfig) -> Vec<Detection<R>> {
    let floor = R::from_f64_lossy(cfg.score_floor);
    ordered
        .into_iter()
        .filter(|d| d.score >= floor)
        .take(cfg.top_k)
        .collect()
}

/// Merge outcome: the combined list plus the count of expert detections
/// dropped for being outside the shared category set.
#[derive(Clone, Debug, PartialEq)]
pub struct MergeOutcome<R: Real> {
    pub detections: Vec<Detection<R>>,
    pub dropped_expert: usize,
}

/// Appends to the primary detections every expert detection whose category
/// is shared; the rest are dropped and counted. Source tags are preserved
/// and no deduplication happens here.
pub fn merge_shared_categories<R: Real>(
    primary: Vec<Detection<R>>,
    expert: Vec<Detection<R>>,
    shared: &BTreeSet<CategoryId>,
) -> MergeOutcome<R> {
    let mut detections = primary;
    let mut dropped_expert = 0usize;
    for det in expert {
        if shared.contains(&det.category) {
            detections.push(det);
        } else {
            dropped_expert += 1;
        }
    }
    MergeOutcome {
        detections,
        dropped_expert,
    }
}

#[derive(Serialize, Deserialize)]
struct DetectionRecord {
    image_id: i64,
    category_id: CategoryId,
    bbox: [f64; 4],
    score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    source: Option<String>,
}

/// Reads a detection result file; records without a source tag get
/// `default_source`. Malformed records are reported with their index.
pub fn read_detections(
    reader: impl Read,
    default_source: &str,
) -> Result<Vec<Detection<f64>>> {
    let records: Vec<DetectionRecord> = serde_json::from_reader(reader)?;
    records
        .into_iter()
        .enumerate()
        .map(|(index, rec)| {
            let [x1, y1, x2, y2] = rec.bbox;
            let bbox = BBox::new(x1, y1, x2, y2).map_err(|e| Error::MalformedRecord {
                index,
                reason: e.to_string(),
            })?;
            Detection::new(
                rec.image_id,
                bbox,
                rec.category_id,
                rec.score,
                rec.source.unwrap_or_else(|| default_source.to_owned()),
            )
            .map_err(|e| Error::MalformedRecord {
                index,
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Writes detections in the result-file schema, including source tags.
pub fn write_detections(detections: &[Detection<f64>], mut writer: impl Write) -> Result<()> {
    let records: Vec<DetectionRecord> = detections
        .iter()
        .map(|d| DetectionRecord {
            image_id: d.image_id,
            category_id: d.category,
            bbox: [d.bbox.x1(), d.bbox.y1(), d.bbox.x2(), d.bbox.y2()],
            score: d.score,
            source: Some(d.source.clone()),
        })
        .collect();
    serde_json::to_writer_pretty(&mut writer, &records)?;
    writer.write_all(b"\n")?;
    Ok(())
}
