use ape_core::ape::{explain, ApeConfig};
use ape_core::fieldgen::{FieldSpace, FieldVariant};
use ape_core::models::{train_model, Model, ModelConfig, ModelKind, Planted};
use ape_core::oracle::separability_index;
use ape_core::surrogates::{ls_ape, ranking_from, rankings_contradict, LsConfig};
use ape_core::tabular::{synthesize_dataset, uniform_box, SyntheticKind};
use ape_core::Classifier;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trained_probabilities_are_normalized(seed in 0u64..1000, kind in 0usize..3, x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let ds = synthesize_dataset(SyntheticKind::Blobs, 120, 1.5, seed).unwrap();
        let k = [ModelKind::DecisionTree, ModelKind::RandomForest, ModelKind::LogisticRegression][kind];
        let m = train_model(&ds, &ModelConfig::new(k), seed).unwrap();
        let p = m.predict_proba(&[vec![x, y]]).unwrap();
        prop_assert!((p[0].iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p[0].iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn ranking_is_scale_invariant(coef in prop::collection::vec(-5.0f64..5.0, 1..8), c in 0.001f64..1000.0) {
        let names: Vec<String> = (0..coef.len()).map(|j| format!("x{j}")).collect();
        let a = ranking_from(&coef, &names);
        let scaled: Vec<f64> = coef.iter().map(|v| v * c).collect();
        let b = ranking_from(&scaled, &names);
        prop_assert!(!rankings_contradict(&a, &b));
        prop_assert_eq!(a.entries.first().map(|e| e.dim), b.entries.first().map(|e| e.dim));
    }

    #[test]
    fn ls_ape_radii_never_shrink(seed in 0u64..500, r0 in 0.01f64..0.5, w1 in -2.0f64..2.0) {
        let ds = uniform_box(200, 2, -1.0, 1.0, seed).unwrap();
        let m = Model::planted(ds.specs.clone(), Planted::Linear { w: vec![1.0, w1], b: 0.0, slope: 3.0 });
        let e = vec![0.0, 0.0];
        let space = FieldSpace::new(&ds, ds.delta(&e).unwrap(), FieldVariant::Centered);
        let res = ls_ape(&space, &m, &ds.standardizer(), &e, r0, 1, 300, &LsConfig::default(), seed).unwrap();
        prop_assert!(res.radii.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(res.radii.iter().all(|&r| r <= 1.0));
        let bound = ((1.0 / r0).ln() / 1.8f64.ln()).ceil() as usize + 1;
        prop_assert!(res.radii.len() <= bound + 1, "{:?}", res.radii);
    }

    #[test]
    fn thornton_index_is_a_fraction(pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0, 0usize..3), 2..40)) {
        let p: Vec<Vec<f64>> = pts.iter().map(|t| vec![t.0, t.1]).collect();
        let l: Vec<usize> = pts.iter().map(|t| t.2).collect();
        let si = separability_index(&p, &l);
        prop_assert!((0.0..=1.0).contains(&si));
        prop_assert!((si * p.len() as f64 - (si * p.len() as f64).round()).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn explanation_kind_matches_verdict(seed in 0u64..200, cell in 0.1f64..1.0, row in 0usize..200) {
        let ds = uniform_box(200, 2, -1.0, 1.0, seed).unwrap();
        let m = Model::planted(ds.specs.clone(), Planted::Checkerboard { cell, dims: vec![0, 1] });
        if let Ok(e) = explain(&ds, &m, &ds.rows[row], &ApeConfig::default(), seed) {
            prop_assert!(e.consistent());
            prop_assert_eq!(e.predicted_class, m.predict_one(&ds.rows[row]).unwrap());
        }
    }
}

#[test]
fn thornton_spot_checks() {
    let p: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
    assert_eq!(separability_index(&p, &[0, 1, 0, 1, 0, 1]), 0.0);
    // the point at 3 ties between 2 and 4 and takes the label of 2
    assert!((separability_index(&p, &[0, 0, 0, 1, 1, 1]) - 5.0 / 6.0).abs() < 1e-12);
    let apart: Vec<Vec<f64>> = [0.0, 1.0, 2.0, 10.0, 11.0, 12.0].iter().map(|&v| vec![v]).collect();
    assert_eq!(separability_index(&apart, &[0, 0, 0, 1, 1, 1]), 1.0);
    // 0 0 1 1 0 0: the points at 1 and 4 face a tie broken towards the lower index
    let si = separability_index(&p, &[0, 0, 1, 1, 0, 0]);
    assert!((si - 4.0 / 6.0).abs() < 1e-12, "{si}");
}
