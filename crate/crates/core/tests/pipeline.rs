use bolimes::boruta::FeatureStatus;
use bolimes::evaluation::evaluate;
use bolimes::learners::GbtParams;
use bolimes::pipeline::{
    evaluate_subset, partition, run_bolimes, sweep_curve, BolimesRun, EvalClassifier, PipelineConfig, Protocol,
};
use bolimes::synth::{synthesize, SyntheticData, SyntheticSpec};
use bolimes::Error;

fn data(n: usize, informative: usize, noise: usize, sep: f64, seed: u64) -> SyntheticData {
    synthesize(&SyntheticSpec {
        n_samples: n,
        n_informative: informative,
        n_noise: noise,
        n_classes: 2,
        class_separation: sep,
        seed,
    })
    .unwrap()
}

fn quick(seed: u64) -> PipelineConfig {
    let mut c = PipelineConfig::new(seed);
    c.boruta.n_estimators = 80;
    c.boruta.max_iter = 40;
    c.lime.n_perturbations = 400;
    c.eval_classifier = match c.eval_classifier {
        EvalClassifier::Forest(p) => EvalClassifier::Forest(bolimes::learners::ForestParams { n_estimators: 40, ..p }),
        other => other,
    };
    c
}

fn check_invariants(run: &BolimesRun, config: &PipelineConfig) {
    let sel = &run.selection;
    let relevant = run.boruta.confirmed();
    assert_eq!(sel.relevant, relevant);
    let mut ranked = sel.ranking.features.clone();
    ranked.sort_unstable();
    assert_eq!(ranked, relevant);
    assert!(sel.k_star >= config.k_min.min(relevant.len()) && sel.k_star <= relevant.len());
    assert_eq!(sel.selected, sel.ranking.features[..sel.k_star]);
    assert!(sel.selected.iter().all(|i| relevant.contains(i)));
    let max = sel.curve.iter().map(|p| p.metrics.accuracy).fold(f64::MIN, f64::max);
    assert_eq!(sel.best_accuracy, max);
    assert!(sel
        .curve
        .iter()
        .filter(|p| p.metrics.accuracy == max)
        .all(|p| p.k >= sel.k_star));
    assert_eq!(sel.model.n_features, sel.k_star);
    assert!(sel.ranking.scores.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn small_relevant_set_clamps_the_sweep() {
    let d = data(80, 3, 20, 3.0, 2);
    let config = quick(2);
    let run = run_bolimes(&d.dataset, &config).unwrap();
    let n_relevant = run.selection.relevant.len();
    assert!(n_relevant < config.k_min, "{n_relevant} confirmed");
    assert_eq!(run.selection.curve.len(), 1);
    assert_eq!(run.selection.k_star, n_relevant);
    check_invariants(&run, &config);
}

#[test]
fn retraining_on_selection_reproduces_best_accuracy() {
    let d = data(100, 4, 60, 1.5, 3);
    let mut config = quick(3);
    config.k_min = 1;
    let run = run_bolimes(&d.dataset, &config).unwrap();
    check_invariants(&run, &config);
    let sel = &run.selection;
    let part = &sel.partition[0];
    let ds = d.dataset.select_features(&sel.selected);
    let model = config
        .eval_classifier
        .train(&ds.select_rows(&part.train), sel.eval_seed)
        .unwrap();
    assert_eq!(model, sel.model);
    let m = evaluate(&model, &ds.select_rows(&part.test)).unwrap();
    assert_eq!(m.accuracy, sel.best_accuracy);
}

#[test]
fn identical_inputs_give_identical_results_across_pools() {
    let d = data(90, 4, 40, 2.0, 4);
    let mut config = quick(4);
    config.k_min = 2;
    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let a = pool(1).install(|| run_bolimes(&d.dataset, &config).unwrap());
    let b = pool(3).install(|| run_bolimes(&d.dataset, &config).unwrap());
    assert_eq!(a.boruta.status, b.boruta.status);
    assert_eq!(a.boruta.hits, b.boruta.hits);
    assert_eq!(a.selection.ranking, b.selection.ranking);
    assert_eq!(a.selection.curve, b.selection.curve);
    assert_eq!(a.selection.model, b.selection.model);
}

#[test]
fn kfold_and_gbt_variants() {
    let d = data(90, 4, 40, 2.5, 5);
    let mut config = quick(5);
    config.k_min = 1;
    config.protocol = Protocol::KFold { folds: 3 };
    config.eval_classifier = EvalClassifier::Gbt(GbtParams {
        n_estimators: 20,
        max_depth: 3,
        learning_rate: 0.1,
    });
    config.selection_on_train_only = true;
    config.standardize = true;
    let run = run_bolimes(&d.dataset, &config).unwrap();
    check_invariants(&run, &config);
    assert_eq!(run.selection.partition.len(), 3);
    assert!(run.selection.curve.iter().all(|p| p.metrics.n_test == 90));
    assert_eq!(run.selection.model.kind(), "gbt");
}

#[test]
fn nothing_confirmed_is_an_explicit_error() {
    let d = data(60, 2, 20, 0.0, 6);
    let mut config = quick(6);
    // too few iterations for any binomial test to pass
    config.boruta.max_iter = 4;
    match run_bolimes(&d.dataset, &config) {
        Err(Error::NoRelevantFeatures(b)) => {
            assert_eq!(b.status.len(), 22);
            assert!(b.status.iter().all(|s| *s != FeatureStatus::Confirmed));
            assert_eq!(b.iterations_run, 4);
        }
        other => panic!("expected NoRelevantFeatures, got {other:?}"),
    }
}

#[test]
fn planted_signal_beats_a_single_feature() {
    for seed in 1..=5 {
        let d = data(120, 5, 30, 1.5, seed);
        let config = quick(seed);
        let parts = partition(&d.dataset, &config).unwrap();
        let curve = sweep_curve(&d.dataset, &parts, &d.informative, &config.eval_classifier, &[1, 5], 7).unwrap();
        assert_eq!(curve.iter().map(|p| p.k).collect::<Vec<_>>(), vec![1, 5]);
        assert!(curve[1].metrics.accuracy >= curve[0].metrics.accuracy, "seed {seed}");
        let direct = evaluate_subset(&d.dataset, &parts, &d.informative, &config.eval_classifier, 7).unwrap();
        assert_eq!(direct, curve[1].metrics);
    }
}
