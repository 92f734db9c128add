//! Long-tail classification workbench: the equalization loss with exact
//! gradients, class-aware resampling, overlap-based ignore weighting, and a
//! frequency-aware re-scoring ensemble, exercised on synthetic long-tail
//! datasets.

pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod geometry;
pub mod ignore;
pub mod losses;
pub mod real;
pub mod sampling;
pub mod stats;
pub mod taxonomy;
pub mod trainer;

pub use error::{Error, Result};
pub use real::Real;

/// Category identifier in `1..=num_categories`; 0 is reserved for background.
pub type CategoryId = u32;

// Concrete f64 instantiations, the precision the CLI runs at.
pub type BBox64 = geometry::BBox<f64>;
pub type Logits64 = losses::Logits<f64>;
pub type LossResult64 = losses::LossResult<f64>;
pub type Detection64 = ensemble::Detection<f64>;

// f32 twins for callers that trade precision for footprint.
pub type BBox32 = geometry::BBox<f32>;
pub type Detection32 = ensemble::Detection<f32>;
pub type Logits32 = losses::Logits<f32>;
pub type LossResult32 = losses::LossResult<f32>;
