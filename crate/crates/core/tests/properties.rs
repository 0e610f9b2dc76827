mod common;

use common::*;
use proptest::prelude::*;
use std::collections::BTreeSet;
use subpop_core::attribute_catalog::{build_catalog, restrict_to_attribute_types, AttributeType, Subpopulation};
use subpop_core::consolidation::{predict_batch, score_average_sims, score_topk, ScoringConfig};
use subpop_core::embedding_store::{filter_similar_classnames, load_embedding_table, save_embedding_table, EmbeddingTable};
use subpop_core::metrics::{accuracy_report, average_precision, worst_q_mean, ReportOptions};
use subpop_core::synthgen::GaussianStream;

fn rows_strategy(max_rows: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dim), 1..max_rows)
        .prop_filter("rows need nonzero norm", |rows| rows.iter().all(|r| r.iter().any(|v| v.abs() > 0.05)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn embd_round_trip_is_bit_exact(rows in rows_strategy(20, 7), source in "[a-z]{0,8}") {
        let mut t = table(&rows, 7, "row/");
        t.meta.source = source;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.embd");
        save_embedding_table(&t, &path).unwrap();
        let back = load_embedding_table(&path).unwrap();
        let bits = |t: &EmbeddingTable| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&t));
        prop_assert_eq!(back, t);
    }

    #[test]
    fn classname_filter_is_idempotent(rows in rows_strategy(25, 3), threshold in 0.3f64..0.99) {
        let t = table(&rows, 3, "c");
        let first = filter_similar_classnames(&t, threshold);
        let kept = t.select(&first.kept);
        let second = filter_similar_classnames(&kept, threshold);
        prop_assert_eq!(second.kept, (0..kept.count()).collect::<Vec<_>>());
        prop_assert!(second.removed.is_empty());
    }

    #[test]
    fn restriction_is_idempotent(seed in any::<u64>(), mask in 0u8..16) {
        let mut s = GaussianStream::new(seed);
        let cat = random_catalog(&mut s, 4, 20, 5, false);
        let types: BTreeSet<AttributeType> =
            TYPES.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, t)| *t).collect();
        let once = restrict_to_attribute_types(&cat, &types);
        let twice = restrict_to_attribute_types(&once, &types);
        prop_assert_eq!(&twice, &once);
        prop_assert!(once.attribute_types().is_subset(&types));
        let all: BTreeSet<AttributeType> = TYPES.into_iter().collect();
        let full = restrict_to_attribute_types(&cat, &all);
        prop_assert_eq!(full.entries().len(), cat.entries().len());
        for e in 0..cat.entries().len() {
            let (a, b) = (&full.entries()[e], &cat.entries()[e]);
            prop_assert_eq!((a.class_index, &a.attribute_text, a.attribute_type), (b.class_index, &b.attribute_text, b.attribute_type));
            prop_assert_eq!(full.entry_vector(e), cat.entry_vector(e));
        }
    }

    #[test]
    fn saturated_topk_is_average_sims(seed in any::<u64>()) {
        let inst = random_instance(seed, Shape { n: 10, classes: 5, subpops: 30, dim: 8, quantized: seed % 2 == 0 });
        let k = inst.catalog.max_pool_size();
        for x in inst.manifest.images.rows() {
            prop_assert_eq!(score_topk(x, &inst.catalog, k).unwrap(), score_average_sims(x, &inst.catalog).unwrap());
        }
    }

    /// A new pool member more similar than every existing one cannot lower the
    /// class's top-k score, and leaves other classes untouched.
    #[test]
    fn dominant_member_never_lowers_topk(seed in any::<u64>(), k in 1usize..6) {
        let mut s = GaussianStream::new(seed);
        let cat = random_catalog(&mut s, 3, 10, 6, false);
        let x: Vec<f64> = s.normals(6);
        let xt = table(std::slice::from_ref(&x), 6, "x");
        let before = score_topk(xt.row(0), &cat, k).unwrap();

        let mut subs: Vec<Subpopulation> = cat.external_subpops().to_vec();
        let mut vecs = cat.external_vectors();
        subs.push(Subpopulation {
            class_index: 1,
            attribute_text: "exact match".into(),
            attribute_type: AttributeType::Kinds,
            vector_row: vecs.count(),
        });
        vecs = vecs.concat(&xt).unwrap();
        let grown = build_catalog(cat.class_names().to_vec(), cat.classname_vectors().clone(), subs, vecs).unwrap();
        let after = score_topk(xt.row(0), &grown, k).unwrap();
        prop_assert!(after[1] >= before[1] - 1e-12);
        prop_assert_eq!(after[0], before[0]);
        prop_assert_eq!(after[2], before[2]);
    }

    #[test]
    fn ap_is_invariant_to_increasing_transforms(
        raw in prop::collection::vec(0i32..15, 1..40),
        flags in prop::collection::vec(any::<bool>(), 40),
    ) {
        let scores: Vec<f64> = raw.iter().map(|&v| f64::from(v)).collect();
        let mut positive: Vec<bool> = flags[..scores.len()].to_vec();
        positive[0] = true;
        let base = average_precision(&scores, &positive).unwrap();
        // Exact in f64 for these small integers.
        let cubed: Vec<f64> = scores.iter().map(|v| v * v * v + 2.0 * v - 7.0).collect();
        prop_assert_eq!(average_precision(&cubed, &positive).unwrap(), base);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn worst_q_is_monotone(values in prop::collection::vec(0.0f64..1.0, 1..50), a in 0.01f64..1.0, b in 0.01f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let wl = worst_q_mean(&values, lo).unwrap();
        let wh = worst_q_mean(&values, hi).unwrap();
        prop_assert!(wl <= wh + 1e-12);
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        prop_assert!(wl >= min - 1e-12 && wh <= mean + 1e-12 || hi < 1.0);
    }

    #[test]
    fn predictions_and_metrics_ignore_image_order(seed in any::<u64>(), k in 1usize..5) {
        let inst = random_instance(seed, Shape { n: 25, classes: 4, subpops: 12, dim: 6, quantized: false });
        let mut s = GaussianStream::new(seed ^ 1);
        let mut perm: Vec<usize> = (0..25).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, (s.uniform() * (i + 1) as f64) as usize);
        }
        let permuted = inst.manifest.permuted(&perm);
        let cfg = ScoringConfig::topk(k, 0.2);
        let a = predict_batch(&inst.manifest.images, &inst.catalog, &cfg).unwrap();
        let b = predict_batch(&permuted.images, &inst.catalog, &cfg).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            prop_assert_eq!(&b[new], &a[old]);
        }
        let opts = ReportOptions::default();
        prop_assert_eq!(accuracy_report(&a, &inst.manifest, &opts).unwrap(), accuracy_report(&b, &permuted, &opts).unwrap());
    }
}
