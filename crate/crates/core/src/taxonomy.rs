//! Category metadata: per-category image frequencies, frequency-group
//! assignment, and the frequency threshold test used by the loss mask.
//!
//! Frequencies are exact rationals (image count over total images) and all
//! threshold comparisons are exact, so masking decisions are reproducible
//! across runs and platforms.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::dataset::ImageContext;
use crate::error::{Error, Result};
use crate::CategoryId;

/// Frequency group, ordered rare < common < frequent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Rare,
    Common,
    Frequent,
}

impl Group {
    pub fn as_str(&self) -> &'static str {
        match self {
            Group::Rare => "rare",
            Group::Common => "common",
            Group::Frequent => "frequent",
        }
    }
}

/// Exact image frequency: `count / total`, with `total >= 1`.
#[derive(Clone, Copy, Debug)]
pub struct Frequency {
    count: u64,
    total: u64,
}

impl Frequency {
    pub fn new(count: u64, total: u64) -> Result<Self> {
        if total == 0 {
            return Err(Error::invalid_input("frequency denominator must be >= 1"));
        }
        if count > total {
            return Err(Error::invalid_input("frequency count exceeds total"));
        }
        Ok(Self { count, total })
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Rounded value for loss-boundary and reporting use only; comparisons
    /// stay exact.
    pub fn as_f64(&self) -> f64 {
        self.count as f64 / self.total as f64
    }

    fn to_rational(self) -> BigRational {
        BigRational::new(self.count.into(), self.total.into())
    }
}

impl PartialEq for Frequency {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Frequency {}

impl PartialOrd for Frequency {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frequency {
    fn cmp(&self, other: &Self) -> Ordering {
        // exact cross-multiplication; u64 products fit in u128
        let lhs = self.count as u128 * other.total as u128;
        let rhs = other.count as u128 * self.total as u128;
        lhs.cmp(&rhs)
    }
}

/// Exact frequency threshold. Categories with frequency strictly below it
/// are shielded from negative gradients on foreground samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Lambda(BigRational);

impl Lambda {
    pub fn zero() -> Self {
        Lambda(BigRational::zero())
    }

    /// Exact conversion of a finite `f64` in `[0, 1]`.
    pub fn from_f64(value: f64) -> Result<Self> {
        if !value.is_finite() || !(0.0..=1.0).contains(&value) {
            return Err(Error::invalid_input(format!(
                "lambda must be a finite value in [0, 1], got {value}"
            )));
        }
        Ok(Lambda(
            BigRational::from_float(value).expect("finite float is rational"),
        ))
    }

    pub fn from_frequency(f: Frequency) -> Self {
        Lambda(f.to_rational())
    }

    /// True iff `f` is strictly below the threshold.
    pub fn shields(&self, f: Frequency) -> bool {
        f.to_rational() < self.0
    }

    pub fn as_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
}

/// Threshold selection for configs: `auto` resolves to the group-splitting
/// threshold of the table; a number is used as-is.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LambdaSpecRepr", into = "LambdaSpecRepr")]
pub enum LambdaSpec {
    #[default]
    Auto,
    Fixed(f64),
}

impl LambdaSpec {
    pub fn resolve(&self, table: &CategoryTable) -> Result<Lambda> {
        match self {
            LambdaSpec::Auto => lambda_for_groups(table),
            LambdaSpec::Fixed(v) => Lambda::from_f64(*v),
        }
    }
}

impl std::fmt::Display for LambdaSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LambdaSpec::Auto => write!(f, "auto"),
            LambdaSpec::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl std::str::FromStr for LambdaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(LambdaSpec::Auto);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::invalid_input(format!("lambda must be 'auto' or a number, got '{s}'")))?;
        Ok(LambdaSpec::Fixed(v))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LambdaSpecRepr {
    Value(f64),
    Text(String),
}

impl TryFrom<LambdaSpecRepr> for LambdaSpec {
    type Error = String;

    fn try_from(repr: LambdaSpecRepr) -> std::result::Result<Self, String> {
        match repr {
            LambdaSpecRepr::Value(v) => Ok(LambdaSpec::Fixed(v)),
            LambdaSpecRepr::Text(s) => s
                .parse()
                .map_err(|e: Error| e.to_string()),
        }
    }
}

impl From<LambdaSpec> for LambdaSpecRepr {
    fn from(spec: LambdaSpec) -> Self {
        match spec {
            LambdaSpec::Auto => LambdaSpecRepr::Text("auto".to_owned()),
            LambdaSpec::Fixed(v) => LambdaSpecRepr::Value(v),
        }
    }
}

/// Image-count thresholds separating the groups: `count <= rare_max` is
/// rare, `count <= common_max` is common, anything above is frequent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupBounds {
    pub rare_max: u64,
    pub common_max: u64,
}

impl Default for GroupBounds {
    // the LVIS v0.5 convention: rare <= 10 images, common <= 100 images
    fn default() -> Self {
        GroupBounds {
            rare_max: 10,
            common_max: 100,
        }
    }
}

impl GroupBounds {
    pub fn new(rare_max: u64, common_max: u64) -> Result<Self> {
        let bounds = GroupBounds {
            rare_max,
            common_max,
        };
        bounds.validate()?;
        Ok(bounds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rare_max == 0 || self.rare_max >= self.common_max {
            return Err(Error::invalid_input(
                "group bounds must satisfy 0 < rare_max < common_max",
            ));
        }
        Ok(())
    }

    pub fn group_for(&self, image_count: u64) -> Group {
        if image_count <= self.rare_max {
            Group::Rare
        } else if image_count <= self.common_max {
            Group::Common
        } else {
            Group::Frequent
        }
    }
}

/// Immutable per-category metadata: image counts, exact frequencies, and
/// group labels for categories `1..=num_categories`.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoryTable {
    num_categories: u32,
    total_images: u64,
    image_counts: Vec<u64>,
    groups: Vec<Group>,
}

impl CategoryTable {
    pub fn num_categories(&self) -> u32 {
        self.num_categories
    }

    pub fn total_images(&self) -> u64 {
        self.total_images
    }

    fn index(&self, j: CategoryId) -> Result<usize> {
        if j == 0 || j > self.num_categories {
            return Err(Error::CategoryOutOfRange {
                id: j,
                max: self.num_categories,
            });
        }
        Ok((j - 1) as usize)
    }

    pub fn image_count(&self, j: CategoryId) -> Result<u64> {
        Ok(self.image_counts[self.index(j)?])
    }

    /// Exact frequency of `j`, recomputed from the stored counts.
    pub fn frequency(&self, j: CategoryId) -> Result<Frequency> {
        Frequency::new(self.image_counts[self.index(j)?], self.total_images)
    }

    pub fn group(&self, j: CategoryId) -> Result<Group> {
        Ok(self.groups[self.index(j)?])
    }

    pub fn categories(&self) -> impl Iterator<Item = CategoryId> {
        1..=self.num_categories
    }

    pub fn categories_in_group(&self, group: Group) -> impl Iterator<Item = CategoryId> + '_ {
        self.categories()
            .filter(move |&j| self.groups[(j - 1) as usize] == group)
    }
}

/// Counts, for each category, the distinct images whose positive set
/// contains it, and assigns groups from the bounds.
pub fn build_category_table(
    annotations: &[ImageContext],
    num_categories: u32,
    bounds: GroupBounds,
) -> Result<CategoryTable> {
    if num_categories == 0 {
        return Err(Error::invalid_input("num_categories must be >= 1"));
    }
    bounds.validate()?;
    if annotations.is_empty() {
        return Err(Error::invalid_input("annotation collection is empty"));
    }
    let mut seen_ids = BTreeSet::new();
    let mut image_counts = vec![0u64; num_categories as usize];
    for ctx in annotations {
        if !seen_ids.insert(ctx.image_id()) {
            return Err(Error::invalid_input(format!(
                "duplicate image id {}",
                ctx.image_id()
            )));
        }
        let max = ctx.max_category();
        if max > num_categories {
            return Err(Error::CategoryOutOfRange {
                id: max,
                max: num_categories,
            });
        }
        for &j in ctx.positives() {
            image_counts[(j - 1) as usize] += 1;
        }
    }
    let groups = image_counts.iter().map(|&n| bounds.group_for(n)).collect();
    Ok(CategoryTable {
        num_categories,
        total_images: annotations.len() as u64,
        image_counts,
        groups,
    })
}

/// True iff the frequency of `j` is strictly below `lambda`.
pub fn below_lambda(table: &CategoryTable, j: CategoryId, lambda: &Lambda) -> Result<bool> {
    Ok(lambda.shields(table.frequency(j)?))
}

/// `below_lambda` evaluated for every category, indexed by `j - 1`.
pub fn below_lambda_set(table: &CategoryTable, lambda: &Lambda) -> Vec<bool> {
    table
        .categories()
        .map(|j| lambda.shields(table.frequency(j).expect("id in range")))
        .collect()
}

/// The smallest frequency among frequent categories: with it as threshold,
/// every rare and common category is shielded whenever frequency values do
/// not collide across the group boundary.
pub fn lambda_for_groups(table: &CategoryTable) -> Result<Lambda> {
    table
        .categories_in_group(Group::Frequent)
        .map(|j| table.frequency(j).expect("id in range"))
        .min()
        .map(Lambda::from_frequency)
        .ok_or_else(|| Error::invalid_input("table has no frequent category"))
}
