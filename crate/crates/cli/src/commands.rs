//! Command implementations: dataset generation, training (single run and
//! the full ablation grid), valid-sample statistics, and result-file
//! ensembling. All outputs are plain files without timestamps, so reruns
//! with the same config are byte-identical.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;

use longtail_core::dataset::read_annotations;
use longtail_core::ensemble::{
    filter_top_k, merge_shared_categories, read_detections, rescore_order, write_detections,
    Detection,
};
use longtail_core::sampling::{generate_split, SyntheticDataset};
use longtail_core::stats::{collect_valid_stats, ratio_series, write_stats_csv, write_stats_gnuplot};
use longtail_core::taxonomy::{
    build_category_table, CategoryTable, Group, Lambda, LambdaSpec,
};
use longtail_core::trainer::{
    train_with_log, EvalReport, LossKind, SamplerKind, TrainConfig,
};
use longtail_core::CategoryId;

use crate::config::ExperimentConfig;

fn ensure_out_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(longtail_core::Error::from)
        .with_context(|| format!("creating output directory {}", dir.display()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let file = File::create(path)
        .map_err(longtail_core::Error::from)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn table_for(ds: &SyntheticDataset<f64>, cfg: &ExperimentConfig) -> anyhow::Result<CategoryTable> {
    Ok(build_category_table(
        ds.images(),
        cfg.synthetic.num_categories,
        cfg.group_bounds,
    )?)
}

fn fmt_acc(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v}"),
        None => "nan".to_owned(),
    }
}

pub fn cmd_generate(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    cfg.validate()?;
    let ds: SyntheticDataset<f64> = generate_split(&cfg.synthetic, 0)?;
    let table = table_for(&ds, cfg)?;
    ensure_out_dir(&cfg.out_dir)?;

    let ann_path = cfg.out_dir.join("annotations.json");
    ds.write_annotations(create(&ann_path)?)?;
    let feat_path = cfg.out_dir.join("features.csv");
    ds.write_features(create(&feat_path)?)?;

    let count_in = |g: Group| table.categories_in_group(g).count();
    println!(
        "generated {} images, {} samples, {} categories -> {}",
        ds.num_images(),
        ds.samples().len(),
        ds.num_categories(),
        cfg.out_dir.display()
    );
    println!(
        "groups: rare={} common={} frequent={}",
        count_in(Group::Rare),
        count_in(Group::Common),
        count_in(Group::Frequent)
    );
    Ok(())
}

fn write_train_log(
    path: &Path,
    log: &[longtail_core::trainer::EpochStats],
) -> anyhow::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "epoch,mean_loss,acc_rare,acc_common,acc_frequent")?;
    for row in log {
        let (r, c, f) = match &row.holdout {
            Some(rep) => (rep.rare, rep.common, rep.frequent),
            None => (None, None, None),
        };
        writeln!(
            w,
            "{},{},{},{},{}",
            row.epoch,
            row.mean_loss,
            fmt_acc(r),
            fmt_acc(c),
            fmt_acc(f)
        )?;
    }
    Ok(())
}

fn write_report(path: &Path, report: &EvalReport) -> anyhow::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, report).map_err(longtail_core::Error::from)?;
    w.write_all(b"\n").map_err(longtail_core::Error::from)?;
    Ok(())
}

fn run_cell(
    train_ds: &SyntheticDataset<f64>,
    holdout: &SyntheticDataset<f64>,
    table: &CategoryTable,
    cell: &TrainConfig,
) -> anyhow::Result<(EvalReport, Vec<longtail_core::trainer::EpochStats>)> {
    let (params, log) = train_with_log(train_ds, table, cell, Some(holdout))?;
    let report = longtail_core::trainer::evaluate(&params, holdout, table)?;
    Ok((report, log))
}

pub fn cmd_train(cfg: &ExperimentConfig, grid: bool) -> anyhow::Result<()> {
    cfg.validate()?;
    let train_ds: SyntheticDataset<f64> = generate_split(&cfg.synthetic, 0)?;
    let holdout: SyntheticDataset<f64> = generate_split(&cfg.synthetic, 1)?;
    let table = table_for(&train_ds, cfg)?;
    ensure_out_dir(&cfg.out_dir)?;

    if !grid {
        let (report, log) = run_cell(&train_ds, &holdout, &table, &cfg.train)?;
        write_train_log(&cfg.out_dir.join("train_log.csv"), &log)?;
        write_report(&cfg.out_dir.join("report.json"), &report)?;
        println!(
            "loss={} sampler={} ignore={} | overall={} rare={} common={} frequent={}",
            cfg.train.loss_kind.as_str(),
            cfg.train.sampler_kind.as_str(),
            if cfg.train.ignore_enabled { "on" } else { "off" },
            fmt_acc(report.overall),
            fmt_acc(report.rare),
            fmt_acc(report.common),
            fmt_acc(report.frequent)
        );
        return Ok(());
    }

    let mut ablation = create(&cfg.out_dir.join("ablation.csv"))?;
    writeln!(ablation, "loss,sampler,ignore,acc_overall,acc_r,acc_c,acc_f")?;
    for loss_kind in [LossKind::SigmoidCe, LossKind::Eql] {
        for sampler_kind in [SamplerKind::Uniform, SamplerKind::ClassAware] {
            for ignore_enabled in [false, true] {
                let cell = TrainConfig {
                    loss_kind,
                    sampler_kind,
                    ignore_enabled,
                    head_loss_scale: if ignore_enabled {
                        cfg.train.ignore.head_loss_scale
                    } else {
                        1.0
                    },
                    ..cfg.train.clone()
                };
                let tag = format!(
                    "{}_{}_{}",
                    loss_kind.as_str(),
                    sampler_kind.as_str(),
                    if ignore_enabled { "ig" } else { "noig" }
                );
                let (report, log) = run_cell(&train_ds, &holdout, &table, &cell)?;
                write_train_log(&cfg.out_dir.join(format!("train_log_{tag}.csv")), &log)?;
                write_report(&cfg.out_dir.join(format!("report_{tag}.json")), &report)?;
                writeln!(
                    ablation,
                    "{},{},{},{},{},{},{}",
                    loss_kind.as_str(),
                    sampler_kind.as_str(),
                    if ignore_enabled { "on" } else { "off" },
                    fmt_acc(report.overall),
                    fmt_acc(report.rare),
                    fmt_acc(report.common),
                    fmt_acc(report.frequent)
                )?;
                println!(
                    "cell {tag}: overall={} rare={}",
                    fmt_acc(report.overall),
                    fmt_acc(report.rare)
                );
            }
        }
    }
    Ok(())
}

fn ratio_text(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_owned()
    } else {
        format!("{v}")
    }
}

pub fn cmd_stats(
    cfg: &ExperimentConfig,
    lambda: Option<LambdaSpec>,
    gnuplot: bool,
) -> anyhow::Result<()> {
    cfg.validate()?;
    let ds: SyntheticDataset<f64> = generate_split(&cfg.synthetic, 0)?;
    let table = table_for(&ds, cfg)?;
    ensure_out_dir(&cfg.out_dir)?;

    let zero = collect_valid_stats(ds.samples(), ds.images(), &table, &Lambda::zero())?;
    let second_spec = lambda.unwrap_or(LambdaSpec::Auto);
    let second_lambda = second_spec.resolve(&table)?;
    let second = collect_valid_stats(ds.samples(), ds.images(), &table, &second_lambda)?;

    write_stats_csv(&zero, &table, create(&cfg.out_dir.join("stats_lambda_zero.csv"))?)?;
    write_stats_csv(
        &second,
        &table,
        create(&cfg.out_dir.join("stats_lambda_auto.csv"))?,
    )?;
    if gnuplot {
        write_stats_gnuplot(
            &zero,
            &table,
            create(&cfg.out_dir.join("stats_lambda_zero.dat"))?,
        )?;
        write_stats_gnuplot(
            &second,
            &table,
            create(&cfg.out_dir.join("stats_lambda_auto.dat"))?,
        )?;
    }

    let mut delta = create(&cfg.out_dir.join("stats_delta.csv"))?;
    writeln!(
        delta,
        "category_id,group,valid_neg_zero,valid_neg_lambda,ratio_zero,ratio_lambda"
    )?;
    for (j, _) in ratio_series(&zero, &table)? {
        writeln!(
            delta,
            "{},{},{},{},{},{}",
            j,
            table.group(j)?.as_str(),
            zero.valid_negative(j),
            second.valid_negative(j),
            ratio_text(zero.neg_pos_ratio(j)),
            ratio_text(second.neg_pos_ratio(j))
        )?;
    }

    let max_rare = |stats: &longtail_core::stats::ValidSampleStats| {
        table
            .categories_in_group(Group::Rare)
            .map(|j| stats.neg_pos_ratio(j))
            .filter(|r| r.is_finite())
            .fold(0.0f64, f64::max)
    };
    println!(
        "lambda={} | max rare neg/pos ratio: {} (lambda=0) -> {} (lambda={})",
        second_spec,
        max_rare(&zero),
        max_rare(&second),
        second_lambda.as_f64()
    );
    Ok(())
}

pub struct EnsembleArgs {
    pub primary: PathBuf,
    pub experts: Vec<PathBuf>,
    pub table: PathBuf,
    pub num_categories: Option<u32>,
    pub shared: Option<Vec<CategoryId>>,
}

fn source_tag(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn read_detection_file(path: &Path) -> anyhow::Result<Vec<Detection<f64>>> {
    let file = File::open(path)
        .map_err(longtail_core::Error::from)
        .with_context(|| format!("opening {}", path.display()))?;
    read_detections(BufReader::new(file), &source_tag(path))
        .with_context(|| format!("reading detections from {}", path.display()))
}

pub fn cmd_ensemble(cfg: &ExperimentConfig, args: &EnsembleArgs) -> anyhow::Result<()> {
    cfg.rescore.validate()?;
    cfg.group_bounds.validate()?;
    let table_file = File::open(&args.table)
        .map_err(longtail_core::Error::from)
        .with_context(|| format!("opening {}", args.table.display()))?;
    let annotations = read_annotations(BufReader::new(table_file))
        .with_context(|| format!("reading annotations from {}", args.table.display()))?;
    let num_categories = match args.num_categories {
        Some(c) => c,
        None => annotations
            .iter()
            .map(|ctx| ctx.max_category())
            .max()
            .unwrap_or(0),
    };
    let table = build_category_table(&annotations, num_categories, cfg.group_bounds)?;

    let mut merged = read_detection_file(&args.primary)?;
    let total_expert: usize;
    let mut dropped = 0usize;
    {
        let mut expert_count = 0usize;
        for path in &args.experts {
            let expert = read_detection_file(path)?;
            expert_count += expert.len();
            let shared: BTreeSet<CategoryId> = match &args.shared {
                Some(ids) => ids.iter().copied().collect(),
                None => table.categories().collect(),
            };
            let outcome = merge_shared_categories(merged, expert, &shared);
            merged = outcome.detections;
            dropped += outcome.dropped_expert;
        }
        total_expert = expert_count;
    }

    let ordered = rescore_order(merged, &table, &cfg.rescore)?;
    let kept = filter_top_k(ordered, &cfg.rescore);

    ensure_out_dir(&cfg.out_dir)?;
    let out_path = cfg.out_dir.join("ensemble.json");
    write_detections(&kept, create(&out_path)?)?;
    println!(
        "kept {} detections ({} expert detections outside the shared set dropped of {}) -> {}",
        kept.len(),
        dropped,
        total_expert,
        out_path.display()
    );
    Ok(())
}
