//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured runtime. Oracles here are independent of the library paths
//! they check (finite differences, lattice rasterization, brute-force rule
//! evaluation).

use std::collections::BTreeSet;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use longtail_core::dataset::{ImageContext, SampleLabel};
use longtail_core::ensemble::{filter_top_k, rescore_order, Detection, RescoreConfig};
use longtail_core::geometry::{iou, BBox};
use longtail_core::ignore::{ignore_sample_weights, IgnoreConfig};
use longtail_core::losses::{eql_loss, eql_weight_mask, sigmoid_ce, Logits, WeightMask};
use longtail_core::sampling::{
    generate_split, generate_synthetic, ClassAwareSampler, SyntheticConfig, SyntheticDataset,
};
use longtail_core::stats::collect_valid_stats;
use longtail_core::taxonomy::{
    build_category_table, lambda_for_groups, CategoryTable, Group, GroupBounds, Lambda,
    LambdaSpec,
};
use longtail_core::trainer::{evaluate, train, train_with_log, LossKind, SamplerKind, TrainConfig};

fn default_table(ds: &SyntheticDataset<f64>) -> CategoryTable {
    build_category_table(ds.images(), ds.num_categories(), GroupBounds::default()).unwrap()
}

fn report_pass(criterion: &str, started: Instant, budget_s: f64) {
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        elapsed < budget_s,
        "{criterion} exceeded its {budget_s}s budget: {elapsed:.1}s"
    );
    println!("{criterion}: PASS ({elapsed:.2}s, budget {budget_s}s)");
}

/// Criterion 1: analytic gradients match central finite differences
/// (h = 1e-5) within 1e-6 absolute per coordinate over 1000 random cases
/// with C in {1, 2, 8, 64}.
#[test]
fn criterion_1_gradient_suite() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let h = 1e-5;
    let mut cases = 0usize;
    for &c in &[1usize, 2, 8, 64] {
        for _ in 0..250 {
            let values: Vec<f64> = (0..c).map(|_| rng.random_range(-5.0..5.0)).collect();
            let label = SampleLabel::new(rng.random_range(0..=c as u32));
            let mask = WeightMask::from_flags((0..c).map(|_| rng.random_bool(0.7)).collect());
            let logits = Logits::new(values.clone()).unwrap();

            let ce = sigmoid_ce(&logits, label).unwrap();
            let eq = eql_loss(&logits, label, &mask).unwrap();
            for i in 0..c {
                let fd = |with_mask: bool| {
                    let mut plus = values.clone();
                    plus[i] += h;
                    let mut minus = values.clone();
                    minus[i] -= h;
                    let eval = |v: Vec<f64>| {
                        let lg = Logits::new(v).unwrap();
                        if with_mask {
                            eql_loss(&lg, label, &mask).unwrap().value
                        } else {
                            sigmoid_ce(&lg, label).unwrap().value
                        }
                    };
                    (eval(plus) - eval(minus)) / (2.0 * h)
                };
                let fd_ce = fd(false);
                let fd_eq = fd(true);
                assert!(
                    (ce.grad[i] - fd_ce).abs() < 1e-6,
                    "sigmoid_ce grad[{i}] {} vs fd {}",
                    ce.grad[i],
                    fd_ce
                );
                assert!(
                    (eq.grad[i] - fd_eq).abs() < 1e-6,
                    "eql grad[{i}] {} vs fd {}",
                    eq.grad[i],
                    fd_eq
                );
            }
            cases += 1;
        }
    }
    assert_eq!(cases, 1000);
    report_pass("criterion 1 (gradient suite)", started, 10.0);
}

/// Criterion 2: the equalization loss with lambda = 0 equals sigmoid
/// cross-entropy bit for bit on 10k random inputs, and the 20-epoch default
/// training trajectory is parameter-identical between the two.
#[test]
fn criterion_2_reduction_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2002);
    let zero = Lambda::zero();
    for &c in &[1usize, 2, 8, 64] {
        // any table works for lambda = 0; reuse one per width
        let annotations: Vec<ImageContext> = (0..4u64)
            .map(|i| {
                ImageContext::new(
                    i,
                    (1..=c as u32).collect::<BTreeSet<_>>(),
                    BTreeSet::new(),
                    vec![],
                )
                .unwrap()
            })
            .collect();
        let table = build_category_table(&annotations, c as u32, GroupBounds::default()).unwrap();
        for _ in 0..2500 {
            let values: Vec<f64> = (0..c).map(|_| rng.random_range(-30.0..30.0)).collect();
            let label = SampleLabel::new(rng.random_range(0..=c as u32));
            let ctx = &annotations[0];
            let mask = eql_weight_mask(label, ctx, &table, &zero).unwrap();
            let logits = Logits::new(values).unwrap();
            let a = sigmoid_ce(&logits, label).unwrap();
            let b = eql_loss(&logits, label, &mask).unwrap();
            assert_eq!(a.value.to_bits(), b.value.to_bits());
            assert_eq!(a.grad.len(), b.grad.len());
            for (x, y) in a.grad.iter().zip(&b.grad) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    let gen_cfg = SyntheticConfig::default();
    let ds: SyntheticDataset<f64> = generate_synthetic(&gen_cfg).unwrap();
    let table = default_table(&ds);
    let base = TrainConfig::default();
    assert_eq!(base.epochs, 20);
    let ce_cfg = TrainConfig {
        loss_kind: LossKind::SigmoidCe,
        ..base.clone()
    };
    let eql_cfg = TrainConfig {
        loss_kind: LossKind::Eql,
        lambda: LambdaSpec::Fixed(0.0),
        ..base
    };
    let (ce_params, ce_log) = train_with_log(&ds, &table, &ce_cfg, None).unwrap();
    let (eql_params, eql_log) = train_with_log(&ds, &table, &eql_cfg, None).unwrap();
    for (a, b) in ce_params.weights().iter().zip(eql_params.weights()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    for (a, b) in ce_params.bias().iter().zip(eql_params.bias()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    for (a, b) in ce_log.iter().zip(&eql_log) {
        assert_eq!(a.mean_loss.to_bits(), b.mean_loss.to_bits());
    }
    report_pass("criterion 2 (reduction equivalence)", started, 60.0);
}

fn run_config(
    ds: &SyntheticDataset<f64>,
    holdout: &SyntheticDataset<f64>,
    table: &CategoryTable,
    seed: u64,
    loss_kind: LossKind,
    sampler_kind: SamplerKind,
) -> longtail_core::trainer::EvalReport {
    let cfg = TrainConfig {
        loss_kind,
        sampler_kind,
        seed,
        ..TrainConfig::default()
    };
    let params = train(ds, table, &cfg).unwrap();
    evaluate(&params, holdout, table).unwrap()
}

/// Criterion 3: with the default long-tail config over 5 seeds, the
/// equalization loss beats the sigmoid baseline on rare-group accuracy in
/// every seed, while frequent-group accuracy drops by less than 3 points.
#[test]
fn criterion_3_directional_rare_gain() {
    let started = Instant::now();
    let mut rare_wins = 0;
    for seed in 42..47u64 {
        let gen_cfg = SyntheticConfig {
            seed,
            ..SyntheticConfig::default()
        };
        assert_eq!(gen_cfg.num_categories, 100);
        assert_eq!(gen_cfg.num_images, 2000);
        assert!((gen_cfg.zipf_exponent - 1.2).abs() < 1e-12);
        let ds: SyntheticDataset<f64> = generate_split(&gen_cfg, 0).unwrap();
        let holdout: SyntheticDataset<f64> = generate_split(&gen_cfg, 1).unwrap();
        let table = default_table(&ds);
        let ce = run_config(&ds, &holdout, &table, seed, LossKind::SigmoidCe, SamplerKind::Uniform);
        let eq = run_config(&ds, &holdout, &table, seed, LossKind::Eql, SamplerKind::Uniform);
        let (ce_rare, eq_rare) = (ce.rare.unwrap(), eq.rare.unwrap());
        let (ce_freq, eq_freq) = (ce.frequent.unwrap(), eq.frequent.unwrap());
        println!(
            "  seed {seed}: rare {ce_rare:.3} -> {eq_rare:.3}, frequent {ce_freq:.3} -> {eq_freq:.3}"
        );
        if eq_rare > ce_rare {
            rare_wins += 1;
        }
        assert!(
            ce_freq - eq_freq < 0.03,
            "frequent drop {:.4} exceeds 3 points",
            ce_freq - eq_freq
        );
    }
    assert_eq!(rare_wins, 5, "rare-group gain must hold in 5/5 seeds");
    report_pass("criterion 3 (directional rare gain)", started, 300.0);
}

/// Criterion 4: rare-group accuracy orders as
/// EQL+resampling > max(EQL, resampling) > baseline on at least 4 of 5 seeds.
#[test]
fn criterion_4_directional_combination() {
    let started = Instant::now();
    let mut holds = 0;
    for seed in 42..47u64 {
        let gen_cfg = SyntheticConfig {
            seed,
            ..SyntheticConfig::default()
        };
        let ds: SyntheticDataset<f64> = generate_split(&gen_cfg, 0).unwrap();
        let holdout: SyntheticDataset<f64> = generate_split(&gen_cfg, 1).unwrap();
        let table = default_table(&ds);
        let base = run_config(&ds, &holdout, &table, seed, LossKind::SigmoidCe, SamplerKind::Uniform)
            .rare
            .unwrap();
        let eql = run_config(&ds, &holdout, &table, seed, LossKind::Eql, SamplerKind::Uniform)
            .rare
            .unwrap();
        let rs = run_config(&ds, &holdout, &table, seed, LossKind::SigmoidCe, SamplerKind::ClassAware)
            .rare
            .unwrap();
        let both = run_config(&ds, &holdout, &table, seed, LossKind::Eql, SamplerKind::ClassAware)
            .rare
            .unwrap();
        let ordered = both > eql.max(rs) && eql.max(rs) > base;
        println!(
            "  seed {seed}: base {base:.3}, eql {eql:.3}, rs {rs:.3}, eql+rs {both:.3} -> {}",
            if ordered { "ordered" } else { "violated" }
        );
        if ordered {
            holds += 1;
        }
    }
    assert!(holds >= 4, "ordering held on {holds}/5 seeds, need >= 4");
    report_pass("criterion 4 (directional combination)", started, 600.0);
}

/// Criterion 5: on the default dataset the worst rare-category
/// negative-to-positive ratio shrinks strictly when the auto threshold is
/// applied, and valid positive counts are untouched.
#[test]
fn criterion_5_valid_sample_ratios() {
    let started = Instant::now();
    let ds: SyntheticDataset<f64> = generate_synthetic(&SyntheticConfig::default()).unwrap();
    let table = default_table(&ds);
    let zero = collect_valid_stats(ds.samples(), ds.images(), &table, &Lambda::zero()).unwrap();
    let auto = collect_valid_stats(
        ds.samples(),
        ds.images(),
        &table,
        &lambda_for_groups(&table).unwrap(),
    )
    .unwrap();
    for j in table.categories() {
        assert_eq!(zero.valid_positive(j), auto.valid_positive(j));
    }
    let max_rare = |stats: &longtail_core::stats::ValidSampleStats| {
        table
            .categories_in_group(Group::Rare)
            .map(|j| stats.neg_pos_ratio(j))
            .filter(|r| r.is_finite())
            .fold(0.0f64, f64::max)
    };
    let (before, after) = (max_rare(&zero), max_rare(&auto));
    assert!(
        after < before,
        "max rare ratio must shrink: {before} -> {after}"
    );
    println!("  max rare neg/pos ratio: {before:.1} -> {after:.1}");
    report_pass("criterion 5 (valid-sample ratios)", started, 30.0);
}

/// Criterion 6: the down-weighting rule matches a brute-force oracle on 10k
/// random proposal/external set pairs, and the IoU matches a 1e-3 lattice
/// rasterization within 1e-3 on 1000 random pairs.
#[test]
fn criterion_6_ignore_rule_oracle() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6006);

    let lattice_box = |rng: &mut ChaCha8Rng| {
        let x1 = rng.random_range(0..8000i64);
        let y1 = rng.random_range(0..8000i64);
        let w = rng.random_range(100..4000i64);
        let h = rng.random_range(100..4000i64);
        BBox::new(
            x1 as f64 * 1e-3,
            y1 as f64 * 1e-3,
            (x1 + w) as f64 * 1e-3,
            (y1 + h) as f64 * 1e-3,
        )
        .unwrap()
    };

    // rasterization oracle: integer cell counting on the 1e-3 lattice
    let raster_iou = |a: &BBox<f64>, b: &BBox<f64>| -> f64 {
        let g = |v: f64| (v / 1e-3).round() as i64;
        let span = |lo: i64, hi: i64| (hi - lo).max(0);
        let cells =
            |x1: i64, y1: i64, x2: i64, y2: i64| span(x1, x2) * span(y1, y2);
        let (ax1, ay1, ax2, ay2) = (g(a.x1()), g(a.y1()), g(a.x2()), g(a.y2()));
        let (bx1, by1, bx2, by2) = (g(b.x1()), g(b.y1()), g(b.x2()), g(b.y2()));
        let inter = cells(ax1.max(bx1), ay1.max(by1), ax2.min(bx2), ay2.min(by2));
        let union = cells(ax1, ay1, ax2, ay2) + cells(bx1, by1, bx2, by2) - inter;
        if union > 0 {
            inter as f64 / union as f64
        } else {
            0.0
        }
    };
    for _ in 0..1000 {
        let a = lattice_box(&mut rng);
        let b = lattice_box(&mut rng);
        let exact = iou(&a, &b);
        let raster = raster_iou(&a, &b);
        assert!(
            (exact - raster).abs() < 1e-3,
            "iou {exact} vs raster {raster}"
        );
    }

    for _ in 0..10_000 {
        let cfg = IgnoreConfig {
            iou_threshold: rng.random_range(0.05..1.0),
            beta: rng.random_range(0.0..1.0),
            head_loss_scale: 2.0,
        };
        let samples: Vec<(BBox<f64>, SampleLabel)> = (0..rng.random_range(1..8))
            .map(|_| (lattice_box(&mut rng), SampleLabel::new(rng.random_range(0..4u32))))
            .collect();
        let external: Vec<BBox<f64>> =
            (0..rng.random_range(0..6)).map(|_| lattice_box(&mut rng)).collect();
        let got = ignore_sample_weights(&samples, &external, &cfg).unwrap();
        // brute force: re-derive each weight from scratch
        for (i, (bbox, label)) in samples.iter().enumerate() {
            let mut down_weight = false;
            if label.is_background() {
                for ext in &external {
                    if iou(bbox, ext) > cfg.iou_threshold {
                        down_weight = true;
                    }
                }
            }
            let expect = if down_weight { cfg.beta } else { 1.0 };
            assert_eq!(got[i], expect);
        }
    }
    report_pass("criterion 6 (ignore rule oracle)", started, 30.0);
}

/// Criterion 7: the worked re-scoring pair holds, ordering properties hold
/// over 10k random detection lists, and the default filter constants are
/// top 300 at floor 0.
#[test]
fn criterion_7_ensemble_properties() {
    let started = Instant::now();
    // table with category 1 frequent, 2 common, 3 rare
    let mut images = Vec::new();
    for i in 0..12u64 {
        let mut pos: BTreeSet<u32> = [1].into_iter().collect();
        if i < 5 {
            pos.insert(2);
        }
        if i < 2 {
            pos.insert(3);
        }
        images.push(ImageContext::new(i, pos, BTreeSet::new(), vec![]).unwrap());
    }
    let table = build_category_table(&images, 3, GroupBounds::new(2, 6).unwrap()).unwrap();
    let cfg = RescoreConfig::default();
    assert_eq!(cfg.top_k, 300);
    assert_eq!(cfg.score_floor, 0.0);
    assert_eq!(cfg.alpha_rare, 0.1);
    assert_eq!(cfg.alpha_common, 0.05);

    let det = |category: u32, score: f64| {
        Detection::new(
            0,
            BBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
            category,
            score,
            "acc",
        )
        .unwrap()
    };

    // worked pair: rare 0.30 ahead of frequent 0.35
    let ordered = rescore_order(vec![det(1, 0.35), det(3, 0.30)], &table, &cfg).unwrap();
    assert_eq!(ordered[0].category(), 3);

    // top-k on 500 ordered detections keeps exactly the 300-prefix
    let many: Vec<_> = (0..500).map(|i| det(1, 1.0 - i as f64 / 500.0)).collect();
    let kept = filter_top_k(many.clone(), &cfg);
    assert_eq!(kept.len(), 300);
    assert_eq!(&kept[..], &many[..300]);

    let mut rng = ChaCha8Rng::seed_from_u64(7007);
    for _ in 0..10_000 {
        let n = rng.random_range(1..40usize);
        // dyadic scores keep shifted sort keys exact
        let dets: Vec<Detection<f64>> = (0..n)
            .map(|_| {
                let score = rng.random_range(0..=(1u32 << 20)) as f64 / (1u32 << 20) as f64;
                det(rng.random_range(1..=3u32), score)
            })
            .collect();
        let ordered = rescore_order(dets.clone(), &table, &cfg).unwrap();

        // within-group descending raw score
        for group in [Group::Rare, Group::Common, Group::Frequent] {
            let scores: Vec<f64> = ordered
                .iter()
                .filter(|d| table.group(d.category()).unwrap() == group)
                .map(|d| d.score())
                .collect();
            for pair in scores.windows(2) {
                assert!(pair[0] >= pair[1], "within-group order broken");
            }
        }

        // idempotence
        let twice = rescore_order(ordered.clone(), &table, &cfg).unwrap();
        assert_eq!(ordered, twice);

        // uniform offset shift leaves the ordering unchanged
        let shift = rng.random_range(1..8) as f64 / 16.0;
        let shifted_cfg = RescoreConfig {
            alpha_rare: cfg.alpha_rare + shift,
            alpha_common: cfg.alpha_common + shift,
            alpha_frequent: cfg.alpha_frequent + shift,
            ..cfg
        };
        let shifted = rescore_order(dets, &table, &shifted_cfg).unwrap();
        assert_eq!(ordered, shifted);

        // length contract after floor + truncation
        let floor_cfg = RescoreConfig {
            score_floor: 0.5,
            top_k: 10,
            ..cfg
        };
        let passing = ordered.iter().filter(|d| d.score() >= 0.5).count();
        let filtered = filter_top_k(ordered, &floor_cfg);
        assert_eq!(filtered.len(), passing.min(10));
    }
    report_pass("criterion 7 (ensemble properties)", started, 30.0);
}

/// Criterion 8: the class-aware sampler's stage-1 category distribution is
/// uniform within 0.01 in L-infinity over 100k draws, and streams are
/// deterministic under a fixed seed.
#[test]
fn criterion_8_sampler_uniformity() {
    let started = Instant::now();
    let ds: SyntheticDataset<f64> = generate_synthetic(&SyntheticConfig::default()).unwrap();

    let prefix = |seed: u64| -> Vec<u64> {
        ClassAwareSampler::new(ds.images(), seed)
            .unwrap()
            .take(10_000)
            .collect()
    };
    assert_eq!(prefix(8008), prefix(8008));

    let mut sampler = ClassAwareSampler::new(ds.images(), 8008).unwrap();
    let mut counts: std::collections::BTreeMap<u32, u64> = std::collections::BTreeMap::new();
    let draws = 100_000usize;
    for _ in 0..draws {
        let (category, _) = sampler.next_pick();
        *counts.entry(category).or_default() += 1;
    }
    let present: BTreeSet<u32> = ds
        .images()
        .iter()
        .flat_map(|ctx| ctx.positives().iter().copied())
        .collect();
    let target = 1.0 / present.len() as f64;
    let mut worst = 0.0f64;
    for &j in &present {
        let observed = *counts.get(&j).unwrap_or(&0) as f64 / draws as f64;
        worst = worst.max((observed - target).abs());
    }
    assert!(worst < 0.01, "stage-1 L-infinity deviation {worst}");
    println!("  stage-1 L-infinity deviation over {} categories: {worst:.5}", present.len());
    report_pass("criterion 8 (sampler uniformity)", started, 30.0);
}
