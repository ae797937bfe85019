use abstain::demo::{run, DemoConfig};

#[test]
fn synthetic_pipeline_meets_targets() {
    let report = run(&DemoConfig::default()).unwrap();
    assert!(report.test_accuracy >= 0.95, "accuracy {}", report.test_accuracy);
    for m in &report.ood {
        assert!(m.metrics.auroc >= 0.90, "{} auroc {}", m.method, m.metrics.auroc);
    }
    assert!(report.nested_cv.leakage_audit_passed);
    assert_eq!(report.sweep.len(), 9);
    eprintln!("{}", serde_json::to_string_pretty(&report.ood).unwrap());
    eprintln!("{:?} {:?}", report.comparison.outcomes, report.comparison.mcnemar);
}

#[test]
fn repeat_runs_are_identical() {
    let cfg = DemoConfig { per_class: 60, ood_samples: 40, outer_folds: 3, inner_folds: 2, epochs: 5, bootstrap_resamples: 200, ..DemoConfig::default() };
    assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
}
