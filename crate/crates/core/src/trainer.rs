//! Linear classifier trained with plain SGD on synthetic long-tail data,
//! under a configurable loss, sampler, and ignore weighting. Training is
//! single-threaded with a fixed iteration and reduction order, so runs are
//! bit-reproducible given the seed, and the equalization loss with a zero
//! threshold follows the sigmoid cross-entropy trajectory exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ignore::{ignore_sample_weights, IgnoreConfig};
use crate::losses::{eql_loss, sigmoid_ce, weight_mask_from_shielded, weighted_loss, Logits};
use crate::real::Real;
use crate::sampling::{ClassAwareSampler, SyntheticDataset, UniformImageSampler};
use crate::taxonomy::{below_lambda_set, CategoryTable, Group, LambdaSpec};
use crate::CategoryId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    SigmoidCe,
    Eql,
}

impl LossKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::SigmoidCe => "sigmoid_ce",
            LossKind::Eql => "eql",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Uniform,
    ClassAware,
}

impl SamplerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SamplerKind::Uniform => "uniform",
            SamplerKind::ClassAware => "class_aware",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss_kind: LossKind,
    pub lambda: LambdaSpec,
    pub sampler_kind: SamplerKind,
    pub ignore_enabled: bool,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Images per minibatch; all samples of a drawn image enter the batch.
    pub batch_size: usize,
    pub seed: u64,
    /// Global scale on every per-sample classification loss.
    pub head_loss_scale: f64,
    /// Overlap down-weighting parameters, active when `ignore_enabled`.
    pub ignore: IgnoreConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss_kind: LossKind::Eql,
            lambda: LambdaSpec::Auto,
            sampler_kind: SamplerKind::Uniform,
            ignore_enabled: false,
            learning_rate: 6.0,
            epochs: 20,
            batch_size: 4,
            seed: 42,
            head_loss_scale: 1.0,
            ignore: IgnoreConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // zero learning rate is degenerate but legal (no-op steps)
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid_input("learning_rate must be finite and >= 0"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid_input("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid_input("batch_size must be >= 1"));
        }
        if !(self.head_loss_scale.is_finite() && self.head_loss_scale > 0.0) {
            return Err(Error::invalid_input("head_loss_scale must be positive"));
        }
        self.ignore.validate()
    }
}

/// Linear classification head: one weight row and bias per category.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<R: Real> {
    weights: Vec<R>, // row-major, num_categories x feature_dim
    bias: Vec<R>,
    num_categories: u32,
    feature_dim: usize,
}

impl<R: Real> ModelParams<R> {
    pub fn zeros(num_categories: u32, feature_dim: usize) -> Self {
        ModelParams {
            weights: vec![R::zero(); num_categories as usize * feature_dim],
            bias: vec![R::zero(); num_categories as usize],
            num_categories,
            feature_dim,
        }
    }

    pub fn num_categories(&self) -> u32 {
        self.num_categories
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn weights(&self) -> &[R] {
        &self.weights
    }

    pub fn bias(&self) -> &[R] {
        &self.bias
    }

    pub fn weight_row(&self, j: CategoryId) -> &[R] {
        let d = self.feature_dim;
        let start = (j - 1) as usize * d;
        &self.weights[start..start + d]
    }

    /// Constructs params from explicit rows; row `j-1` scores category `j`.
    pub fn from_rows(rows: &[Vec<R>], bias: Vec<R>) -> Result<Self> {
        let num_categories = rows.len() as u32;
        if num_categories == 0 || bias.len() != rows.len() {
            return Err(Error::invalid_input("rows and bias must agree and be non-empty"));
        }
        let feature_dim = rows[0].len();
        if rows.iter().any(|r| r.len() != feature_dim) {
            return Err(Error::invalid_input("rows must have equal length"));
        }
        Ok(ModelParams {
            weights: rows.concat(),
            bias,
            num_categories,
            feature_dim,
        })
    }

    pub fn logits(&self, features: &[R]) -> Vec<R> {
        let d = self.feature_dim;
        (0..self.num_categories as usize)
            .map(|row| {
                let w = &self.weights[row * d..(row + 1) * d];
                let mut acc = self.bias[row];
                for (wi, xi) in w.iter().zip(features) {
                    acc = acc + *wi * *xi;
                }
                acc
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

/// Per-category holdout outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub category: CategoryId,
    pub group: Group,
    pub correct: u64,
    pub total: u64,
    pub accuracy: Option<f64>,
}

/// Holdout evaluation: thresholded per-category accuracy, unweighted group
/// means, and the background rejection rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_category: Vec<CategoryScore>,
    pub rare: Option<f64>,
    pub common: Option<f64>,
    pub frequent: Option<f64>,
    pub overall: Option<f64>,
    pub background_rejection: Option<f64>,
}

impl EvalReport {
    pub fn group_mean(&self, group: Group) -> Option<f64> {
        match group {
            Group::Rare => self.rare,
            Group::Common => self.common,
            Group::Frequent => self.frequent,
        }
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub holdout: Option<EvalReport>,
}

enum ImageStream {
    Uniform(UniformImageSampler),
    ClassAware(ClassAwareSampler),
}

impl Iterator for ImageStream {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        match self {
            ImageStream::Uniform(s) => s.next(),
            ImageStream::ClassAware(s) => s.next(),
        }
    }
}

/// Trains and records per-epoch statistics; when a holdout split is given,
/// each epoch ends with an evaluation on it.
pub fn train_with_log<R: Real>(
    dataset: &SyntheticDataset<R>,
    table: &CategoryTable,
    cfg: &TrainConfig,
    holdout: Option<&SyntheticDataset<R>>,
) -> Result<(ModelParams<R>, Vec<EpochStats>)> {
    cfg.validate()?;
    if table.num_categories() != dataset.num_categories() {
        return Err(Error::invalid_input(
            "table and dataset disagree on the number of categories",
        ));
    }
    if dataset.samples().is_empty() {
        return Err(Error::invalid_input("dataset has no samples"));
    }

    let num_categories = dataset.num_categories() as usize;
    let dim = dataset.feature_dim();
    let shielded = match cfg.loss_kind {
        LossKind::Eql => below_lambda_set(table, &cfg.lambda.resolve(table)?),
        LossKind::SigmoidCe => Vec::new(),
    };
    let mut stream = match cfg.sampler_kind {
        SamplerKind::Uniform => {
            ImageStream::Uniform(UniformImageSampler::new(dataset.num_images(), cfg.seed)?)
        }
        SamplerKind::ClassAware => {
            ImageStream::ClassAware(ClassAwareSampler::new(dataset.images(), cfg.seed)?)
        }
    };

    let mut params = ModelParams::<R>::zeros(num_categories as u32, dim);
    let lr = R::from_f64_lossy(cfg.learning_rate);
    let steps_per_epoch = dataset.num_images().div_ceil(cfg.batch_size);
    let mut acc_w = vec![R::zero(); num_categories * dim];
    let mut acc_b = vec![R::zero(); num_categories];
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut epoch_loss = R::zero();
        let mut epoch_samples = 0usize;
        for batch in 0..steps_per_epoch {
            acc_w.fill(R::zero());
            acc_b.fill(R::zero());
            let mut batch_loss = R::zero();
            let mut batch_samples = 0usize;
            for _ in 0..cfg.batch_size {
                let image_id = stream.next().expect("infinite stream");
                let ctx = dataset.context(image_id);
                let samples = dataset.samples_for_image(image_id);
                let ignore_weights: Option<Vec<f64>> = if cfg.ignore_enabled {
                    let pairs: Vec<_> =
                        samples.iter().map(|s| (s.bbox, s.label)).collect();
                    let external: Vec<_> =
                        ctx.gt_boxes().iter().map(|(b, _)| *b).collect();
                    Some(ignore_sample_weights(&pairs, &external, &cfg.ignore)?)
                } else {
                    None
                };
                for (idx, sample) in samples.iter().enumerate() {
                    let raw = params.logits(&sample.features);
                    let logits = Logits::new(raw).map_err(|_| Error::Diverged {
                        epoch: epoch + 1,
                        batch,
                    })?;
                    let mut result = match cfg.loss_kind {
                        LossKind::SigmoidCe => sigmoid_ce(&logits, sample.label)?,
                        LossKind::Eql => {
                            let mask =
                                weight_mask_from_shielded(sample.label, ctx, &shielded)?;
                            eql_loss(&logits, sample.label, &mask)?
                        }
                    };
                    let iw = ignore_weights.as_ref().map_or(1.0, |w| w[idx]);
                    let scale = iw * cfg.head_loss_scale;
                    if scale != 1.0 {
                        if scale > 0.0 {
                            result = weighted_loss(result, R::from_f64_lossy(scale))?;
                        } else {
                            // beta = 0 fully silences the sample
                            result.value = R::zero();
                            result.grad.fill(R::zero());
                        }
                    }
                    batch_loss = batch_loss + result.value;
                    for (j, &g) in result.grad.iter().enumerate() {
                        if g != R::zero() {
                            acc_b[j] = acc_b[j] + g;
                            let row = &mut acc_w[j * dim..(j + 1) * dim];
                            for (slot, &x) in row.iter_mut().zip(&sample.features) {
                                *slot = *slot + g * x;
                            }
                        }
                    }
                    batch_samples += 1;
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch: epoch + 1,
                    batch,
                });
            }
            let factor = lr / R::from_usize(batch_samples).expect("batch is non-empty");
            for (w, g) in params.weights.iter_mut().zip(&acc_w) {
                *w = *w - factor * *g;
            }
            for (b, g) in params.bias.iter_mut().zip(&acc_b) {
                *b = *b - factor * *g;
            }
            epoch_loss = epoch_loss + batch_loss;
            epoch_samples += batch_samples;
        }
        let holdout_report = match holdout {
            Some(h) => Some(evaluate(&params, h, table)?),
            None => None,
        };
        log.push(EpochStats {
            epoch: epoch + 1,
            mean_loss: (epoch_loss / R::from_usize(epoch_samples).expect("non-empty epoch"))
                .to_f64()
                .unwrap_or(f64::NAN),
            holdout: holdout_report,
        });
    }
    Ok((params, log))
}

/// Minibatch SGD on the mean per-sample loss.
pub fn train<R: Real>(
    dataset: &SyntheticDataset<R>,
    table: &CategoryTable,
    cfg: &TrainConfig,
) -> Result<ModelParams<R>> {
    train_with_log(dataset, table, cfg, None).map(|(params, _)| params)
}

/// Thresholded-accuracy evaluation. A foreground sample is correct iff the
/// top category matches its label and scores above 1/2 probability; a
/// background sample is rejected iff no category scores above 1/2. With
/// `p = sigmoid(z)`, `p > 1/2` is exactly `z > 0`.
pub fn evaluate<R: Real>(
    params: &ModelParams<R>,
    holdout: &SyntheticDataset<R>,
    table: &CategoryTable,
) -> Result<EvalReport> {
    if holdout.samples().is_empty() {
        return Err(Error::invalid_input("holdout is empty"));
    }
    if table.num_categories() != holdout.num_categories()
        || params.num_categories != holdout.num_categories()
        || params.feature_dim != holdout.feature_dim()
    {
        return Err(Error::invalid_input(
            "params, holdout and table disagree on dimensions",
        ));
    }
    let c = params.num_categories as usize;
    let mut correct = vec![0u64; c];
    let mut total = vec![0u64; c];
    let mut bg_rejected = 0u64;
    let mut bg_total = 0u64;
    for sample in holdout.samples() {
        let logits = params.logits(&sample.features);
        let mut arg = 0usize;
        for (i, &z) in logits.iter().enumerate() {
            if z > logits[arg] {
                arg = i;
            }
        }
        match sample.label.category() {
            Some(cat) => {
                total[(cat - 1) as usize] += 1;
                if arg == (cat - 1) as usize && logits[arg] > R::zero() {
                    correct[(cat - 1) as usize] += 1;
                }
            }
            None => {
                bg_total += 1;
                if logits[arg] <= R::zero() {
                    bg_rejected += 1;
                }
            }
        }
    }
    let per_category: Vec<CategoryScore> = (1..=params.num_categories)
        .map(|j| {
            let idx = (j - 1) as usize;
            CategoryScore {
                category: j,
                group: table.group(j).expect("id in range"),
                correct: correct[idx],
                total: total[idx],
                accuracy: if total[idx] > 0 {
                    Some(correct[idx] as f64 / total[idx] as f64)
                } else {
                    None
                },
            }
        })
        .collect();
    let mean_over = |pred: &dyn Fn(&CategoryScore) -> bool| -> Option<f64> {
        let scored: Vec<f64> = per_category
            .iter()
            .filter(|s| pred(s))
            .filter_map(|s| s.accuracy)
            .collect();
        if scored.is_empty() {
            None
        } else {
            Some(scored.iter().sum::<f64>() / scored.len() as f64)
        }
    };
    Ok(EvalReport {
        rare: mean_over(&|s| s.group == Group::Rare),
        common: mean_over(&|s| s.group == Group::Common),
        frequent: mean_over(&|s| s.group == Group::Frequent),
        overall: mean_over(&|_| true),
        background_rejection: if bg_total > 0 {
            Some(bg_rejected as f64 / bg_total as f64)
        } else {
            None
        },
        per_category,
    })
}
