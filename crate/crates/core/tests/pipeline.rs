use ape_core::ape::{explain, explain_batch, ApeConfig, Explanation, Fallback, Payload};
use ape_core::models::{train_model, Model, ModelConfig, ModelKind, Planted};
use ape_core::tabular::{read_dataset, synthesize_dataset, uniform_box, SyntheticKind};
use ape_core::{Classifier, Error};

#[test]
fn linear_rankings_follow_planted_weights() {
    let ds = uniform_box(800, 3, -1.0, 1.0, 4).unwrap();
    let m = Model::planted(ds.specs.clone(), Planted::Linear { w: vec![3.0, -2.0, 1.0], b: 0.0, slope: f64::INFINITY });
    let mut agree = 0;
    let mut linear = 0;
    for s in 0..20u64 {
        let x = ds.rows[s as usize * 7].clone();
        let e = explain(&ds, &m, &x, &ApeConfig::default(), s).unwrap();
        assert!(e.consistent());
        if let Payload::Linear { ranking, .. } = &e.explanation {
            linear += 1;
            if ranking.entries.iter().map(|r| r.dim).collect::<Vec<_>>() == vec![0, 1, 2] {
                agree += 1;
            }
        }
    }
    assert!(linear >= 16, "{linear}");
    assert!(agree * 5 >= linear * 4, "{agree}/{linear}");
}

#[test]
fn forest_on_moons_explanations_are_well_formed() {
    let ds = synthesize_dataset(SyntheticKind::Moons, 600, 0.1, 3).unwrap();
    let m = train_model(&ds, &ModelConfig::new(ModelKind::RandomForest), 3).unwrap();
    let targets: Vec<_> = ds.rows.iter().take(8).cloned().collect();
    for fallback in [Fallback::Tree, Fallback::Anchor] {
        let cfg = ApeConfig { fallback, ..ApeConfig::default() };
        for e in explain_batch(&ds, &m, &targets, &cfg, 9) {
            let e = e.unwrap();
            assert!(e.consistent());
            assert!(!e.rendering.is_empty());
            for c in e.counterfactuals() {
                assert_ne!(m.predict_one(&c.instance).unwrap(), e.predicted_class);
            }
            let json = e.to_json().unwrap();
            assert_eq!(Explanation::from_json(&json).unwrap().to_json().unwrap(), json);
        }
    }
}

#[test]
fn batch_is_independent_of_thread_count() {
    let ds = uniform_box(400, 2, -1.0, 1.0, 8).unwrap();
    let m = Model::planted(ds.specs.clone(), Planted::Checkerboard { cell: 0.3, dims: vec![0, 1] });
    let targets: Vec<_> = ds.rows.iter().take(6).cloned().collect();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            explain_batch(&ds, &m, &targets, &ApeConfig::default(), 5)
                .into_iter()
                .map(|e| e.unwrap().to_json().unwrap())
                .collect::<Vec<_>>()
        })
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn constant_model_has_no_counterfactual() {
    let ds = uniform_box(100, 2, 0.0, 1.0, 1).unwrap();
    let m = Model::planted(ds.specs.clone(), Planted::Constant { class: 0, n_classes: 2 });
    let err = explain(&ds, &m, &vec![0.5, 0.5], &ApeConfig::default(), 0).unwrap_err();
    assert!(matches!(err, Error::NoCounterfactual), "{err:?}");
}

#[test]
fn csv_round_trip_keeps_schema() {
    let csv = "age,sex,label\n30,F,yes\n41,M,no\n25,M,yes\n";
    let ds = read_dataset(csv.as_bytes(), None, Some("label")).unwrap();
    let mut out = Vec::new();
    ds.write_csv(&mut out).unwrap();
    let back = read_dataset(out.as_slice(), Some(&ds.specs), Some("label")).unwrap();
    assert_eq!(back.rows, ds.rows);
    assert_eq!(back.labels, ds.labels);
}

#[test]
fn arity_mismatch_is_rejected() {
    let ds = uniform_box(50, 2, 0.0, 1.0, 1).unwrap();
    let m = Model::planted(ds.specs.clone(), Planted::Linear { w: vec![1.0, 0.0], b: -0.5, slope: f64::INFINITY });
    assert!(matches!(explain(&ds, &m, &vec![0.5], &ApeConfig::default(), 0), Err(Error::Arity { .. })));
}
