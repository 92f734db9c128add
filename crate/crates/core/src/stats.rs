//! Valid-sample accounting: how many positive and negative samples actually
//! contribute to the loss of each category under a given threshold, and the
//! negative-to-positive ratio series that exposes the imbalance.

use std::collections::HashMap;
use std::io::Write;

use crate::dataset::{ImageContext, LabeledSample};
use crate::error::{Error, Result};
use crate::losses::weight_mask_from_shielded;
use crate::real::Real;
use crate::taxonomy::{below_lambda_set, CategoryTable, Lambda};
use crate::CategoryId;

/// Per-category counts of samples whose mask entry is one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidSampleStats {
    valid_positive: Vec<u64>,
    valid_negative: Vec<u64>,
}

impl ValidSampleStats {
    pub fn num_categories(&self) -> u32 {
        self.valid_positive.len() as u32
    }

    pub fn valid_positive(&self, j: CategoryId) -> u64 {
        self.valid_positive[(j - 1) as usize]
    }

    pub fn valid_negative(&self, j: CategoryId) -> u64 {
        self.valid_negative[(j - 1) as usize]
    }

    /// Negative-to-positive ratio; infinity when there are no positives.
    pub fn neg_pos_ratio(&self, j: CategoryId) -> f64 {
        let pos = self.valid_positive(j);
        if pos == 0 {
            f64::INFINITY
        } else {
            self.valid_negative(j) as f64 / pos as f64
        }
    }
}

/// Counts, per category `j`, the samples that are valid positives (labeled
/// `j`, mask one) and valid negatives (labeled anything else including
/// background, mask one), under the masks the equalization loss would build.
pub fn collect_valid_stats<R: Real>(
    samples: &[LabeledSample<R>],
    images: &[ImageContext],
    table: &CategoryTable,
    lambda: &Lambda,
) -> Result<ValidSampleStats> {
    let c = table.num_categories() as usize;
    let shielded = below_lambda_set(table, lambda);
    let by_id: HashMap<u64, &ImageContext> =
        images.iter().map(|ctx| (ctx.image_id(), ctx)).collect();
    let mut valid_positive = vec![0u64; c];
    let mut valid_negative = vec![0u64; c];
    for sample in samples {
        let ctx = by_id.get(&sample.image_id).ok_or_else(|| {
            Error::invalid_input(format!("sample references unknown image {}", sample.image_id))
        })?;
        let mask = weight_mask_from_shielded(sample.label, ctx, &shielded)?;
        for j in 1..=c as u32 {
            if !mask.is_active(j) {
                continue;
            }
            if sample.label.raw() == j {
                valid_positive[(j - 1) as usize] += 1;
            } else {
                valid_negative[(j - 1) as usize] += 1;
            }
        }
    }
    Ok(ValidSampleStats {
        valid_positive,
        valid_negative,
    })
}

/// Categories sorted by descending frequency (ties by ascending id), paired
/// with their negative-to-positive ratios.
pub fn ratio_series(
    stats: &ValidSampleStats,
    table: &CategoryTable,
) -> Result<Vec<(CategoryId, f64)>> {
    if stats.num_categories() != table.num_categories() {
        return Err(Error::invalid_input("stats and table disagree on categories"));
    }
    let mut order: Vec<CategoryId> = table.categories().collect();
    order.sort_by(|&a, &b| {
        let fa = table.frequency(a).expect("id in range");
        let fb = table.frequency(b).expect("id in range");
        fb.cmp(&fa).then(a.cmp(&b))
    });
    Ok(order
        .into_iter()
        .map(|j| (j, stats.neg_pos_ratio(j)))
        .collect())
}

/// CSV dump in ratio-series order; infinite ratios are written as `inf`.
pub fn write_stats_csv(
    stats: &ValidSampleStats,
    table: &CategoryTable,
    mut writer: impl Write,
) -> Result<()> {
    writeln!(writer, "category_id,frequency,group,valid_pos,valid_neg,ratio")?;
    for (j, ratio) in ratio_series(stats, table)? {
        let freq = table.frequency(j).expect("id in range");
        let group = table.group(j).expect("id in range");
        let ratio_text = if ratio.is_infinite() {
            "inf".to_owned()
        } else {
            format!("{ratio}")
        };
        writeln!(
            writer,
            "{},{},{},{},{},{}",
            j,
            freq.as_f64(),
            group.as_str(),
            stats.valid_positive(j),
            stats.valid_negative(j),
            ratio_text
        )?;
    }
    Ok(())
}

/// Gnuplot-friendly dump: `#`-prefixed header, whitespace-separated columns,
/// same order and sentinels as the CSV.
pub fn write_stats_gnuplot(
    stats: &ValidSampleStats,
    table: &CategoryTable,
    mut writer: impl Write,
) -> Result<()> {
    writeln!(writer, "# category_id frequency group valid_pos valid_neg ratio")?;
    for (j, ratio) in ratio_series(stats, table)? {
        let freq = table.frequency(j).expect("id in range");
        let group = table.group(j).expect("id in range");
        let ratio_text = if ratio.is_infinite() {
            "inf".to_owned()
        } else {
            format!("{ratio}")
        };
        writeln!(
            writer,
            "{} {} {} {} {} {}",
            j,
            freq.as_f64(),
            group.as_str(),
            stats.valid_positive(j),
            stats.valid_negative(j),
            ratio_text
        )?;
    }
    Ok(())
}
