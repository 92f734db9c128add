//! Synthetic long-tail dataset generation and image-level samplers.
//!
//! Each image draws instance labels from a Zipf law over the categories, so
//! the head of the category range dominates and the tail is scarce. Features
//! are noisy copies of per-category unit mean vectors; background samples
//! are pure noise. Everything is deterministic given the config seed.

use std::collections::BTreeSet;
use std::io::Write;
use std::ops::Range;

use rand::distr::Distribution;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, Zipf};
use serde::{Deserialize, Serialize};

use crate::dataset::{write_annotations, ImageContext, LabeledSample, SampleLabel};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::real::Real;
use crate::CategoryId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_categories: u32,
    pub feature_dim: usize,
    /// Zipf exponent; larger means a heavier head.
    pub zipf_exponent: f64,
    /// Foreground instances per image; an equal number of background
    /// samples is generated.
    pub instances_per_image: usize,
    pub num_images: usize,
    pub noise_sigma: f64,
    /// Size of the per-image explicit-negative category set.
    pub neg_set_size: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_categories: 100,
            feature_dim: 24,
            zipf_exponent: 1.2,
            instances_per_image: 4,
            num_images: 2000,
            noise_sigma: 0.2,
            neg_set_size: 5,
            seed: 42,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_categories < 2 {
            return Err(Error::invalid_input("num_categories must be >= 2"));
        }
        if self.feature_dim == 0 {
            return Err(Error::invalid_input("feature_dim must be >= 1"));
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent > 0.0) {
            return Err(Error::invalid_input("zipf_exponent must be > 0"));
        }
        if self.instances_per_image == 0 {
            return Err(Error::invalid_input("instances_per_image must be >= 1"));
        }
        if self.num_images == 0 {
            return Err(Error::invalid_input("num_images must be >= 1"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma > 0.0) {
            return Err(Error::invalid_input("noise_sigma must be > 0"));
        }
        Ok(())
    }
}

/// Generated dataset: image contexts, proposal samples grouped by image,
/// and the true category means the features were drawn around.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset<R: Real> {
    images: Vec<ImageContext>,
    samples: Vec<LabeledSample<R>>,
    sample_ranges: Vec<Range<usize>>,
    category_means: Vec<Vec<R>>,
    num_categories: u32,
    feature_dim: usize,
}

impl<R: Real> SyntheticDataset<R> {
    pub fn images(&self) -> &[ImageContext] {
        &self.images
    }

    pub fn samples(&self) -> &[LabeledSample<R>] {
        &self.samples
    }

    pub fn category_means(&self) -> &[Vec<R>] {
        &self.category_means
    }

    pub fn num_categories(&self) -> u32 {
        self.num_categories
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_images(&self) -> usize {
        self.images.len()
    }

    /// Image ids are dense: `0..num_images`.
    pub fn context(&self, image_id: u64) -> &ImageContext {
        &self.images[image_id as usize]
    }

    pub fn samples_for_image(&self, image_id: u64) -> &[LabeledSample<R>] {
        &self.samples[self.sample_ranges[image_id as usize].clone()]
    }

    pub fn write_annotations(&self, writer: impl Write) -> Result<()> {
        write_annotations(&self.images, writer)
    }

    /// Class-aware resampling stream over this dataset's images.
    pub fn class_aware_sampler(&self, seed: u64) -> Result<ClassAwareSampler> {
        ClassAwareSampler::new(&self.images, seed)
    }

    /// Flat feature matrix, one row per sample: `image_id,label,f0..f{d-1}`.
    pub fn write_features(&self, mut writer: impl Write) -> Result<()> {
        write!(writer, "image_id,label")?;
        for i in 0..self.feature_dim {
            write!(writer, ",f{i}")?;
        }
        writeln!(writer)?;
        for sample in &self.samples {
            write!(writer, "{},{}", sample.image_id, sample.label.raw())?;
            for v in &sample.features {
                write!(writer, ",{v}")?;
            }
            writeln!(writer)?;
        }
        Ok(())
    }
}

const TAG_MEANS: u64 = 0;
const TAG_SPLIT_BASE: u64 = 1;

/// Mixes a purpose tag into the root seed (splitmix64 finalizer).
fn derived_seed(root: u64, tag: u64) -> u64 {
    let mut z = root ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit_mean<R: Real>(rng: &mut ChaCha8Rng, dim: usize) -> Vec<R>
where
    StandardNormal: Distribution<R>,
{
    loop {
        let v: Vec<R> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v
            .iter()
            .fold(R::zero(), |acc, x| acc + *x * *x)
            .sqrt();
        if norm > R::zero() {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn unit_square(rng: &mut ChaCha8Rng) -> BBox<f64> {
    let x: f64 = rng.random_range(0.0..9.0);
    let y: f64 = rng.random_range(0.0..9.0);
    BBox::new(x, y, x + 1.0, y + 1.0).expect("valid square")
}

/// Generates the dataset for one split. Category means depend only on the
/// seed, so different splits of the same config share them; image content is
/// drawn per split.
pub fn generate_split<R: Real>(cfg: &SyntheticConfig, split: u32) -> Result<SyntheticDataset<R>>
where
    StandardNormal: Distribution<R>,
{
    cfg.validate()?;
    let c = cfg.num_categories;
    let sigma = R::from_f64_lossy(cfg.noise_sigma);

    let mut means_rng = ChaCha8Rng::seed_from_u64(derived_seed(cfg.seed, TAG_MEANS));
    let category_means: Vec<Vec<R>> = (0..c)
        .map(|_| unit_mean(&mut means_rng, cfg.feature_dim))
        .collect();

    let mut rng =
        ChaCha8Rng::seed_from_u64(derived_seed(cfg.seed, TAG_SPLIT_BASE + split as u64));
    let zipf = Zipf::new(c as f64, cfg.zipf_exponent)
        .map_err(|e| Error::invalid_input(format!("zipf parameters: {e}")))?;

    let mut images = Vec::with_capacity(cfg.num_images);
    let mut samples = Vec::with_capacity(cfg.num_images * 2 * cfg.instances_per_image);
    let mut sample_ranges = Vec::with_capacity(cfg.num_images);

    for image_id in 0..cfg.num_images as u64 {
        let start = samples.len();
        let labels: Vec<CategoryId> = (0..cfg.instances_per_image)
            .map(|_| zipf.sample(&mut rng) as CategoryId)
            .collect();
        let positives: BTreeSet<CategoryId> = labels.iter().copied().collect();

        let mut gt_boxes = Vec::with_capacity(labels.len());
        for &label in &labels {
            let gt = unit_square(&mut rng);
            let dx: f64 = rng.random_range(-0.3..0.3);
            let dy: f64 = rng.random_range(-0.3..0.3);
            let proposal = gt.translated(dx, dy).expect("finite translation");
            let features: Vec<R> = category_means[(label - 1) as usize]
                .iter()
                .map(|m| {
                    let noise: R = rng.sample(StandardNormal);
                    *m + sigma * noise
                })
                .collect();
            gt_boxes.push((gt, label));
            samples.push(LabeledSample {
                image_id,
                label: SampleLabel::new(label),
                features,
                bbox: proposal,
            });
        }

        // explicit negatives: uniform over the absent categories, truncated
        // when fewer than neg_set_size remain
        let complement: Vec<CategoryId> =
            (1..=c).filter(|j| !positives.contains(j)).collect();
        let take = cfg.neg_set_size.min(complement.len());
        let negatives: BTreeSet<CategoryId> =
            rand::seq::index::sample(&mut rng, complement.len(), take)
                .into_iter()
                .map(|idx| complement[idx])
                .collect();

        for _ in 0..cfg.instances_per_image {
            let bbox = unit_square(&mut rng);
            let features: Vec<R> = (0..cfg.feature_dim)
                .map(|_| {
                    let noise: R = rng.sample(StandardNormal);
                    sigma * noise
                })
                .collect();
            samples.push(LabeledSample {
                image_id,
                label: SampleLabel::BACKGROUND,
                features,
                bbox,
            });
        }

        images.push(ImageContext::new(image_id, positives, negatives, gt_boxes)?);
        sample_ranges.push(start..samples.len());
    }

    Ok(SyntheticDataset {
        images,
        samples,
        sample_ranges,
        category_means,
        num_categories: c,
        feature_dim: cfg.feature_dim,
    })
}

/// The training split (split 0).
pub fn generate_synthetic<R: Real>(cfg: &SyntheticConfig) -> Result<SyntheticDataset<R>>
where
    StandardNormal: Distribution<R>,
{
    generate_split(cfg, 0)
}

/// Two-stage image sampler: draw a category uniformly from those present in
/// the dataset, then an image uniformly from the images containing it.
/// Yields an infinite deterministic stream.
#[derive(Clone, Debug)]
pub struct ClassAwareSampler {
    categories: Vec<CategoryId>,
    images_per_category: Vec<Vec<u64>>,
    rng: ChaCha8Rng,
}

impl ClassAwareSampler {
    pub fn new(images: &[ImageContext], seed: u64) -> Result<Self> {
        let mut by_category: std::collections::BTreeMap<CategoryId, Vec<u64>> =
            std::collections::BTreeMap::new();
        for ctx in images {
            for &j in ctx.positives() {
                by_category.entry(j).or_default().push(ctx.image_id());
            }
        }
        if by_category.is_empty() {
            return Err(Error::invalid_input(
                "dataset has no image with a positive category",
            ));
        }
        let (categories, images_per_category) = by_category.into_iter().unzip();
        Ok(ClassAwareSampler {
            categories,
            images_per_category,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// One draw, exposing the stage-1 category.
    pub fn next_pick(&mut self) -> (CategoryId, u64) {
        let idx = self.rng.random_range(0..self.categories.len());
        let pool = &self.images_per_category[idx];
        let image = pool[self.rng.random_range(0..pool.len())];
        (self.categories[idx], image)
    }
}

impl Iterator for ClassAwareSampler {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        Some(self.next_pick().1)
    }
}

/// Uniform-over-images sampler with the same infinite-stream shape.
#[derive(Clone, Debug)]
pub struct UniformImageSampler {
    num_images: u64,
    rng: ChaCha8Rng,
}

impl UniformImageSampler {
    pub fn new(num_images: usize, seed: u64) -> Result<Self> {
        if num_images == 0 {
            return Err(Error::invalid_input("dataset has no images"));
        }
        Ok(UniformImageSampler {
            num_images: num_images as u64,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

impl Iterator for UniformImageSampler {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        Some(self.rng.random_range(0..self.num_images))
    }
}
