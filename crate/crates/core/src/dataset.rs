//! Shared data layer: sample labels, per-image annotation context, and the
//! JSON annotation interchange format.
//!
//! Annotation documents are a JSON array of image records:
//! `[{"id": 0, "pos_categories": [1], "neg_categories": [2],
//!    "boxes": [[x1, y1, x2, y2, category], ...]}, ...]`

use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::real::Real;
use crate::CategoryId;

/// Category assigned to one proposal; 0 is the background sentinel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleLabel(u32);

impl SampleLabel {
    pub const BACKGROUND: SampleLabel = SampleLabel(0);

    pub fn new(raw: u32) -> Self {
        SampleLabel(raw)
    }

    pub fn foreground(category: CategoryId) -> Result<Self> {
        if category == 0 {
            return Err(Error::invalid_input("foreground label must be >= 1"));
        }
        Ok(SampleLabel(category))
    }

    pub fn raw(&self) -> u32 {
        self.0
    }

    pub fn is_background(&self) -> bool {
        self.0 == 0
    }

    /// The foreground category, or `None` for background.
    pub fn category(&self) -> Option<CategoryId> {
        if self.0 == 0 {
            None
        } else {
            Some(self.0)
        }
    }
}

/// Per-image ground-truth context: the positive and negative category sets
/// and the annotated boxes. Positive and negative sets are disjoint.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageContext {
    image_id: u64,
    positives: BTreeSet<CategoryId>,
    negatives: BTreeSet<CategoryId>,
    gt_boxes: Vec<(BBox<f64>, CategoryId)>,
}

impl ImageContext {
    pub fn new(
        image_id: u64,
        positives: BTreeSet<CategoryId>,
        negatives: BTreeSet<CategoryId>,
        gt_boxes: Vec<(BBox<f64>, CategoryId)>,
    ) -> Result<Self> {
        if positives.contains(&0) || negatives.contains(&0) {
            return Err(Error::invalid_input(
                "category 0 is reserved for background",
            ));
        }
        if let Some(j) = positives.intersection(&negatives).next() {
            return Err(Error::invalid_input(format!(
                "category {j} in both positive and negative sets of image {image_id}"
            )));
        }
        if gt_boxes.iter().any(|(_, c)| *c == 0) {
            return Err(Error::invalid_input("ground-truth box with category 0"));
        }
        Ok(Self {
            image_id,
            positives,
            negatives,
            gt_boxes,
        })
    }

    pub fn image_id(&self) -> u64 {
        self.image_id
    }

    pub fn positives(&self) -> &BTreeSet<CategoryId> {
        &self.positives
    }

    pub fn negatives(&self) -> &BTreeSet<CategoryId> {
        &self.negatives
    }

    pub fn gt_boxes(&self) -> &[(BBox<f64>, CategoryId)] {
        &self.gt_boxes
    }

    /// True iff `j` is in the union of the positive and negative sets.
    pub fn is_annotated(&self, j: CategoryId) -> bool {
        self.positives.contains(&j) || self.negatives.contains(&j)
    }

    /// Largest category id mentioned anywhere in this context.
    pub fn max_category(&self) -> CategoryId {
        let sets = self
            .positives
            .iter()
            .chain(self.negatives.iter())
            .copied()
            .max()
            .unwrap_or(0);
        let boxes = self.gt_boxes.iter().map(|(_, c)| *c).max().unwrap_or(0);
        sets.max(boxes)
    }
}

/// One proposal: feature vector, assigned category (0 = background), the
/// owning image, and the proposal box used by the overlap weighting path.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample<R: Real> {
    pub image_id: u64,
    pub label: SampleLabel,
    pub features: Vec<R>,
    pub bbox: BBox<f64>,
}

#[derive(Serialize, Deserialize)]
struct ImageRecord {
    id: u64,
    pos_categories: Vec<CategoryId>,
    neg_categories: Vec<CategoryId>,
    boxes: Vec<(f64, f64, f64, f64, CategoryId)>,
}

fn record_error(index: usize, err: Error) -> Error {
    Error::MalformedRecord {
        index,
        reason: err.to_string(),
    }
}

/// Reads an annotation document. Image ids must be unique.
pub fn read_annotations(reader: impl Read) -> Result<Vec<ImageContext>> {
    let records: Vec<ImageRecord> = serde_json::from_reader(reader)?;
    let mut seen = BTreeSet::new();
    let mut contexts = Vec::with_capacity(records.len());
    for (index, rec) in records.into_iter().enumerate() {
        if !seen.insert(rec.id) {
            return Err(Error::MalformedRecord {
                index,
                reason: format!("duplicate image id {}", rec.id),
            });
        }
        let mut gt_boxes = Vec::with_capacity(rec.boxes.len());
        for (x1, y1, x2, y2, c) in rec.boxes {
            let b = BBox::new(x1, y1, x2, y2).map_err(|e| record_error(index, e))?;
            gt_boxes.push((b, c));
        }
        let ctx = ImageContext::new(
            rec.id,
            rec.pos_categories.into_iter().collect(),
            rec.neg_categories.into_iter().collect(),
            gt_boxes,
        )
        .map_err(|e| record_error(index, e))?;
        contexts.push(ctx);
    }
    Ok(contexts)
}

pub fn write_annotations(contexts: &[ImageContext], mut writer: impl Write) -> Result<()> {
    let records: Vec<ImageRecord> = contexts
        .iter()
        .map(|ctx| ImageRecord {
            id: ctx.image_id,
            pos_categories: ctx.positives.iter().copied().collect(),
            neg_categories: ctx.negatives.iter().copied().collect(),
            boxes: ctx
                .gt_boxes
                .iter()
                .map(|(b, c)| (b.x1(), b.y1(), b.x2(), b.y2(), *c))
                .collect(),
        })
        .collect();
    serde_json::to_writer_pretty(&mut writer, &records)?;
    writer.write_all(b"\n")?;
    Ok(())
}
