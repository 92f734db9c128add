//! Per-sample classification losses with exact analytic gradients: sigmoid
//! cross-entropy over one binary classifier per foreground category, and its
//! equalization variant that masks negative gradients to shielded categories
//! on foreground samples.
//!
//! Both losses share one evaluation kernel with a fixed ascending summation
//! order, so the all-ones-mask case reproduces plain sigmoid cross-entropy
//! bit for bit.

use crate::dataset::{ImageContext, SampleLabel};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::taxonomy::{below_lambda_set, CategoryTable, Lambda};
use crate::CategoryId;

/// Raw scores, one per foreground category. There is no background logit:
/// background is expressed by all sigmoids being low.
#[derive(Clone, Debug, PartialEq)]
pub struct Logits<R: Real>(Vec<R>);

impl<R: Real> Logits<R> {
    pub fn new(values: Vec<R>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid_input("logit vector must be non-empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_input("logits must be finite"));
        }
        Ok(Logits(values))
    }

    pub fn values(&self) -> &[R] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Binary per-category weight mask; entry `j` gates the `j`-th loss term.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightMask {
    active: Vec<bool>,
}

impl WeightMask {
    pub fn all_ones(num_categories: usize) -> Self {
        WeightMask {
            active: vec![true; num_categories],
        }
    }

    pub fn from_flags(active: Vec<bool>) -> Self {
        WeightMask { active }
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// Whether category `j` (1-based) contributes to the loss.
    pub fn is_active(&self, j: CategoryId) -> bool {
        self.active[(j - 1) as usize]
    }

    pub fn flags(&self) -> &[bool] {
        &self.active
    }
}

/// Loss value plus the gradient with respect to each logit.
#[derive(Clone, Debug, PartialEq)]
pub struct LossResult<R: Real> {
    pub value: R,
    pub grad: Vec<R>,
}

/// `ln(1 + e^x)` without overflow at large `|x|`.
fn softplus<R: Real>(x: R) -> R {
    x.max(R::zero()) + (-x.abs()).exp().ln_1p()
}

fn sigmoid<R: Real>(x: R) -> R {
    R::one() / (R::one() + (-x).exp())
}

/// Shared kernel: `None` mask means all-ones. Summation runs over
/// categories in ascending order.
fn masked_ce<R: Real>(
    logits: &Logits<R>,
    label: SampleLabel,
    mask: Option<&WeightMask>,
) -> Result<LossResult<R>> {
    let num_categories = logits.len();
    if label.raw() as usize > num_categories {
        return Err(Error::CategoryOutOfRange {
            id: label.raw(),
            max: num_categories as u32,
        });
    }
    if let Some(m) = mask {
        if m.len() != num_categories {
            return Err(Error::invalid_input(format!(
                "mask length {} does not match {} categories",
                m.len(),
                num_categories
            )));
        }
    }
    let mut value = R::zero();
    let mut grad = Vec::with_capacity(num_categories);
    for j in 1..=num_categories as u32 {
        let active = mask.is_none_or(|m| m.is_active(j));
        if !active {
            grad.push(R::zero());
            continue;
        }
        let z = logits.values()[(j - 1) as usize];
        if label.raw() == j {
            // -log p_j; the gradient p_j - 1 is evaluated as -sigmoid(-z)
            // to avoid cancellation at large z
            value = value + softplus(-z);
            grad.push(-sigmoid(-z));
        } else {
            // -log (1 - p_j)
            value = value + softplus(z);
            grad.push(sigmoid(z));
        }
    }
    Ok(LossResult { value, grad })
}

/// Sigmoid cross-entropy: every category is a binary classifier; the labeled
/// category is its positive, all others (and the whole vector, for
/// background) are negatives.
pub fn sigmoid_ce<R: Real>(logits: &Logits<R>, label: SampleLabel) -> Result<LossResult<R>> {
    masked_ce(logits, label, None)
}

/// Equalization loss: sigmoid cross-entropy with the per-category mask
/// applied to both the value terms and the gradient.
pub fn eql_loss<R: Real>(
    logits: &Logits<R>,
    label: SampleLabel,
    mask: &WeightMask,
) -> Result<LossResult<R>> {
    masked_ce(logits, label, Some(mask))
}

/// Mask construction given a precomputed shielded set (`below_lambda` per
/// category): entry `j` is zero iff the sample is foreground, `j` is
/// shielded, and `j` is not annotated (positively or negatively) in the
/// sample's image.
pub(crate) fn weight_mask_from_shielded(
    label: SampleLabel,
    ctx: &ImageContext,
    shielded: &[bool],
) -> Result<WeightMask> {
    let num_categories = shielded.len() as u32;
    match label.category() {
        None => Ok(WeightMask::all_ones(shielded.len())),
        Some(c) => {
            if c > num_categories {
                return Err(Error::CategoryOutOfRange {
                    id: c,
                    max: num_categories,
                });
            }
            if !ctx.positives().contains(&c) {
                return Err(Error::InconsistentAnnotation {
                    label: c,
                    image_id: ctx.image_id(),
                });
            }
            let active = (1..=num_categories)
                .map(|j| !(shielded[(j - 1) as usize] && !ctx.is_annotated(j)))
                .collect();
            Ok(WeightMask::from_flags(active))
        }
    }
}

/// The equalization-loss weight mask for one sample in its image context.
pub fn eql_weight_mask(
    label: SampleLabel,
    ctx: &ImageContext,
    table: &CategoryTable,
    lambda: &Lambda,
) -> Result<WeightMask> {
    let shielded = below_lambda_set(table, lambda);
    weight_mask_from_shielded(label, ctx, &shielded)
}

/// Scales the loss value and every gradient entry by a positive factor.
pub fn weighted_loss<R: Real>(result: LossResult<R>, scale: R) -> Result<LossResult<R>> {
    if !(scale.is_finite() && scale > R::zero()) {
        return Err(Error::invalid_input("loss scale must be positive and finite"));
    }
    Ok(LossResult {
        value: result.value * scale,
        grad: result.grad.into_iter().map(|g| g * scale).collect(),
    })
}
