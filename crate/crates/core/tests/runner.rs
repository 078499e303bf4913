mod common;

use std::collections::BTreeSet;

use common::fixture;
use mmrec_core::runner::{self, ExperimentConfig};
use mmrec_core::Error;

fn benchmark_config() -> ExperimentConfig {
    ExperimentConfig::load(fixture("benchmark.yaml")).unwrap()
}

#[test]
fn one_result_row_per_model_and_tag() {
    let report = runner::run_benchmark(&benchmark_config()).unwrap();
    let keys: Vec<(String, String)> =
        report.results.iter().map(|r| (r.model_name.clone(), r.extractor_tag.clone())).collect();
    let unique: BTreeSet<_> = keys.iter().cloned().collect();
    assert_eq!(keys.len(), unique.len());
    assert_eq!(keys.len(), 5);
    for (model, tag) in &keys {
        let multimodal = model == "vbpr" || model == "frozen_graph";
        assert_eq!(tag == "class", multimodal, "{model} tagged {tag}");
    }
    for r in &report.results {
        assert_eq!(r.k, 20);
        assert_eq!(r.seed, 42);
        assert!(r.num_evaluated_users > 0);
    }
}

#[test]
fn written_outputs_carry_the_protocol_header() {
    let dir = tempfile::tempdir().unwrap();
    let report = runner::run_benchmark(&benchmark_config()).unwrap();
    report.write(dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(text.starts_with("# protocol: override\n"));
    assert!(text.contains("# grid_points: 4\n"));
    for name in ["runs.csv", "summary.csv", "report.md"] {
        assert!(dir.path().join(name).is_file(), "{name} missing");
    }
    let parsed = runner::report::read_results_csv(dir.path().join("results.csv")).unwrap();
    assert_eq!(parsed, report.results);
}

#[test]
fn missing_feature_file_names_the_stage() {
    let mut cfg = benchmark_config();
    let set = &mut cfg.feature_sets[0];
    let path = set.files.values_mut().next().unwrap();
    *path = path.with_file_name("absent.mmfe");
    let err = runner::run_benchmark(&cfg).unwrap_err();
    assert!(err.to_string().starts_with("feature-store: Io"), "{err}");
}

#[test]
fn config_problems_are_reported_before_any_work() {
    let base = std::fs::read_to_string(fixture("benchmark.yaml")).unwrap();
    let cases = [
        base.replace("learning_rates: [0.01, 0.05]", "learning_rates: []"),
        base.replace("seeds: [42]", "seeds: []"),
        base.replace("K: 20", "K: 0"),
        base.replace("extractor_tag: class", "extractor_tag: none"),
        base.replace("workers: 4", "workers: 4\nunknown_key: 1"),
    ];
    for text in cases {
        let err = ExperimentConfig::from_yaml(&text).and_then(|c| c.validate().map(|_| c)).unwrap_err();
        assert!(err.is_config_error(), "{err}");
    }
    let bad_grid = base.replace("regs: [0.00001, 0.01]", "regs: []");
    let err = ExperimentConfig::from_yaml(&bad_grid).and_then(|c| c.validate()).unwrap_err();
    assert!(matches!(err, Error::EmptyGrid), "{err}");
}
