//! End-to-end paths across module boundaries: dataset file round-trips
//! feeding training, model persistence feeding classification, and the
//! evaluator agreeing with direct classification.

use forefront::cascade::{
    classify_raw, load_model, save_model, train_forefront, PrepConfig, StagePlan, TrainOptions,
};
use forefront::datagen::{generate_dataset, load_csv_dataset, write_csv_dataset, GenConfig};
use forefront::eval::{
    evaluate_methods, stratified_kfold, EvalOptions, Method,
};
use forefront::learners::grid_from_exponents;

fn gen_config(noise_amp: f64, seed: u64) -> GenConfig {
    GenConfig {
        n_classes: 3,
        n_channels: 2,
        n_locations: 2,
        series_per_class_location: 6,
        duration_s: 20.0,
        rate_hz: 100.0,
        noise_rho: if noise_amp > 0.0 { 0.9 } else { 0.0 },
        noise_amp,
        seed,
    }
}

fn options() -> TrainOptions {
    TrainOptions {
        grid: grid_from_exponents(&[2], &[-6, -4]),
        top_n: 2,
        oof_folds: 3,
        fallback: Default::default(),
        prep: PrepConfig::default(),
    }
}

#[test]
fn csv_round_trip_preserves_training_outcome() {
    let dataset = generate_dataset(&gen_config(0.0, 21)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_csv_dataset(&dataset, dir.path()).unwrap();
    let reloaded = load_csv_dataset(&manifest).unwrap();

    let plan = StagePlan::new(vec![2.0, 4.0], 10.0).unwrap();
    let a = train_forefront(&dataset, &plan, &options()).unwrap();
    let b = train_forefront(&reloaded, &plan, &options()).unwrap();
    // Series files store nine decimal digits, so the reloaded values can
    // differ in the last few ULPs. The contract is behavioral: the same
    // pairs get selected and every sample classifies identically.
    assert_eq!(a.report.n_used, b.report.n_used);
    assert_eq!(a.report.stages.len(), b.report.stages.len());
    for (sa, sb) in a.report.stages.iter().zip(&b.report.stages) {
        assert_eq!(sa.first_id, sb.first_id);
        assert_eq!(sa.second_id, sb.second_id);
        assert!((sa.df - sb.df).abs() < 1e-9);
        assert!((sa.first_accuracy - sb.first_accuracy).abs() < 1e-9);
    }
    for item in &dataset.items {
        let ta = classify_raw(&a.model, item).unwrap();
        let tb = classify_raw(&b.model, item).unwrap();
        assert_eq!(ta.final_label, tb.final_label);
        assert_eq!(ta.decided_at_s, tb.decided_at_s);
        assert_eq!(ta.forced, tb.forced);
        assert_eq!(ta.steps.len(), tb.steps.len());
    }
}

#[test]
fn saved_model_classifies_like_the_evaluator() {
    let dataset = generate_dataset(&gen_config(0.0, 22)).unwrap();
    let plan = StagePlan::new(vec![2.0, 4.0], 10.0).unwrap();
    let folds = stratified_kfold(&dataset, 3, 4).unwrap();
    let eval_options = EvalOptions { train: options(), d: 0.2 };
    let report = evaluate_methods(
        &dataset,
        &plan,
        &[Method::Forefront, Method::Cwro { tau: 0.5 }],
        &folds,
        &eval_options,
    )
    .unwrap();
    assert_eq!(report.traces.len(), dataset.items.len());

    // Rebuild fold 0's model, persist it, reload it, and classify the
    // held-out samples: traces must match the evaluator's stored ones.
    let train_items: Vec<_> = folds
        .train_indices(0)
        .into_iter()
        .map(|i| dataset.items[i].clone())
        .collect();
    let train_set = forefront::datagen::Dataset {
        items: train_items,
        class_names: dataset.class_names.clone(),
    };
    let outcome = train_forefront(&train_set, &plan, &options()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&outcome.model, &path).unwrap();
    let loaded = load_model(&path).unwrap();

    for idx in folds.test_indices(0) {
        let direct = classify_raw(&loaded, &dataset.items[idx]).unwrap();
        let stored = report
            .traces
            .iter()
            .find(|t| t.sample_id == idx)
            .expect("every sample evaluated");
        assert_eq!(direct.steps, stored.steps);
        assert_eq!(direct.final_label, stored.final_label);
        assert_eq!(direct.forced, stored.forced);
    }
}

#[test]
fn noisy_pipeline_stays_deterministic_end_to_end() {
    let cfg = gen_config(0.08, 23);
    let dataset = generate_dataset(&cfg).unwrap();
    let plan = StagePlan::new(vec![12.0, 16.0], 10.0).unwrap();
    let mut topts = options();
    topts.prep.use_onset = false;
    let eval_options = EvalOptions { train: topts, d: 0.2 };
    let folds = stratified_kfold(&dataset, 3, 17).unwrap();
    let methods = [Method::Forefront, Method::Cwro { tau: 0.5 }, Method::Cwro { tau: 0.3 }];
    let a = evaluate_methods(&dataset, &plan, &methods, &folds, &eval_options).unwrap();
    let b = evaluate_methods(&dataset, &plan, &methods, &folds, &eval_options).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.extras_to_csv(), b.extras_to_csv());

    // Report algebra on noisy data: acceptance plus fallback covers all
    // samples for the cascade; the baseline leaves the rest rejected.
    for row in a.method_rows("forefront") {
        assert!((row.coverage + row.forced_frac - 1.0).abs() < 1e-9);
        assert!(row.mean_earliness_s <= plan.times_s().last().copied().unwrap() + 1e-9);
    }
    for row in a.method_rows("cwro_tau_0.50") {
        assert_eq!(row.forced_frac, 0.0);
        assert!(row.coverage <= 1.0 + 1e-12);
    }
}
