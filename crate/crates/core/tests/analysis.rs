mod common;

use common::*;
use subpop_core::analysis::{run_ablation, run_sweep, AblationPlan, SimilarityCache, SweepGrid};
use subpop_core::attribute_catalog::AttributeType;
use subpop_core::consolidation::{predict_batch, AveragingMode, Consolidator, Method, ScoringConfig};
use subpop_core::metrics::{accuracy_report, ReportOptions};
use subpop_core::synthgen::{generate, Center, ClassSpec, ExtraAttribute, Subcluster, SynthSpec, Typicality};

#[test]
fn cached_scores_match_fresh_scoring() {
    let inst = random_instance(41, Shape { n: 60, classes: 5, subpops: 40, dim: 12, quantized: false });
    let cache = SimilarityCache::build(&inst.manifest.images, &inst.catalog, true).unwrap();
    for mode in [AveragingMode::Sims, AveragingMode::Vecs] {
        let grid = SweepGrid::default().with_averaging(mode);
        for cfg in grid.configs() {
            let fresh = predict_batch(&inst.manifest.images, &inst.catalog, &cfg).unwrap();
            let scorer = Consolidator::new(&inst.catalog, cfg).unwrap();
            for (i, rec) in fresh.iter().enumerate() {
                let cached = scorer.class_scores(cache.row(i), cache.mean_row(i));
                for (a, b) in cached.iter().zip(&rec.class_scores) {
                    assert!((a - b).abs() <= 1e-7);
                }
            }
        }
    }
}

#[test]
fn sweep_is_deterministic_and_matches_direct_runs() {
    let inst = random_instance(5, Shape { n: 80, classes: 6, subpops: 30, dim: 10, quantized: true });
    let grid = SweepGrid::new(vec![1, 3, 200], vec![0.0, 0.5, 1.0], AveragingMode::Sims).unwrap();
    let opts = ReportOptions::default();
    let a = run_sweep(&inst.manifest, &inst.catalog, &grid, &opts).unwrap();
    let b = run_sweep(&inst.manifest, &inst.catalog, &grid, &opts).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    for cell in &a.cells {
        let recs = predict_batch(&inst.manifest.images, &inst.catalog, &ScoringConfig::topk(cell.k, cell.lambda)).unwrap();
        assert_eq!(cell.report, accuracy_report(&recs, &inst.manifest, &opts).unwrap());
    }
    // Saturated top-k is full averaging.
    let sat = &a.cell(200, 0.0).unwrap().report;
    let avg = predict_batch(&inst.manifest.images, &inst.catalog, &ScoringConfig::new(Method::AverageSims)).unwrap();
    assert_eq!(sat, &accuracy_report(&avg, &inst.manifest, &opts).unwrap());
}

/// Each class has two visually distinct kinds (listed as `kinds`) and many
/// irrelevant `states` attributes with no images behind them.
fn informative_and_noise() -> SynthSpec {
    let sub = |text: &str, typicality| Subcluster {
        center: Center::RANDOM,
        dispersion: 0.12,
        count: 25,
        attribute_text: text.into(),
        attribute_type: AttributeType::Kinds,
        typicality,
        listed: true,
    };
    SynthSpec {
        dim: 32,
        seed: 99,
        classes: (0..10)
            .map(|c| ClassSpec {
                name: format!("class{c}"),
                subclusters: vec![sub("common kind", Typicality::Typical), sub("rare kind", Typicality::Atypical)],
                extra_attributes: (0..30)
                    .map(|i| ExtraAttribute {
                        center: Center::RANDOM,
                        attribute_text: format!("state {i}"),
                        attribute_type: AttributeType::States,
                    })
                    .collect(),
            })
            .collect(),
    }
}

#[test]
fn noise_attributes_hurt_averaging_but_not_topk() {
    let (m, cat) = generate(&informative_and_noise()).unwrap();
    let plan = AblationPlan::new(vec![AttributeType::Kinds, AttributeType::States], vec![Method::Topk, Method::AverageSims])
        .unwrap();
    let base = ScoringConfig::topk(2, 0.0);
    let res = run_ablation(&m, &cat, &plan, &base, &ReportOptions::default()).unwrap();
    let acc = |p, method| res.row(p, method).unwrap().report.overall_accuracy;
    assert!(acc(1, Method::Topk) >= acc(0, Method::Topk));
    assert!(acc(2, Method::Topk) >= acc(1, Method::Topk));
    assert!(acc(2, Method::AverageSims) < acc(1, Method::AverageSims));
    // The full prefix reproduces the standalone evaluation.
    let direct = accuracy_report(&predict_batch(&m.images, &cat, &base).unwrap(), &m, &ReportOptions::default()).unwrap();
    assert_eq!(res.row(2, Method::Topk).unwrap().report, direct);
    assert!(res.missing_types.is_empty());
}
