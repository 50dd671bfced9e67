use heatlab::config::{bundled, CheckConfig, CheckParams, Expectation, ExperimentConfig};
use heatlab::render;
use heatlab::report::Verdict;
use heatlab::suite::{run_suite, ImplicationStatus, SuiteOptions, SuiteReport};

fn small(name: &str) -> ExperimentConfig {
    let mut c = bundled(name).unwrap();
    c.space.params.side = 64;
    c.grids.times = 8;
    c
}

fn check(kind: &str, expect: Expectation, params: CheckParams) -> CheckConfig {
    CheckConfig { kind: kind.into(), label: None, expect, params }
}

fn without_timestamp(r: &SuiteReport) -> String {
    let mut v = serde_json::to_value(r).unwrap();
    v["provenance"].as_object_mut().unwrap().remove("timestamp");
    serde_json::to_string(&v).unwrap()
}

#[test]
fn jump_model_cross_matrix_is_clean() {
    let run = run_suite(&bundled("z1_alpha1").unwrap(), &SuiteOptions::default()).unwrap();
    let r = &run.report;
    assert!(r.deviations.is_empty(), "{:?}", r.deviations);
    assert_eq!(r.exit_code(), 0);
    for k in ["pi", "gcap", "cs", "jump", "uhkd", "ndl", "phi", "hk", "hk_minus"] {
        assert!(r.entry(k).unwrap().report.verdict.passes(), "{k}: {:?}", r.entry(k).unwrap().report.verdict);
    }
    let hk_minus = r.implications.iter().find(|i| i.antecedent == "hk_minus").unwrap();
    assert_eq!(hk_minus.status, ImplicationStatus::Holds);
}

#[test]
fn counterexample_flags_the_asymmetry() {
    let run = run_suite(&bundled("phi_counterexample").unwrap(), &SuiteOptions::default()).unwrap();
    let r = &run.report;
    assert_eq!(r.exit_code(), 0, "{:?}", r.deviations);
    assert!(r.entry("phi").unwrap().report.verdict.passes());
    assert_eq!(r.entry("jump_wrong_small_scale").unwrap().report.verdict, Verdict::Failed);
    assert_eq!(r.observations[0].observed, Some(true));
}

#[test]
fn empty_check_list_succeeds() {
    let mut c = small("z1_alpha1");
    c.checks.clear();
    let run = run_suite(&c, &SuiteOptions::default()).unwrap();
    assert!(run.report.checks.is_empty());
    assert_eq!(run.report.exit_code(), 0);
    assert!(run.experiment.kernel_if_ready().is_none());
}

#[test]
fn unexpected_verdict_exits_two() {
    let mut c = small("z1_alpha1");
    c.checks = vec![check("volume", Expectation::Failed, CheckParams::default())];
    let run = run_suite(&c, &SuiteOptions::default()).unwrap();
    assert_eq!(run.report.exit_code(), 2);
    assert_eq!(run.report.deviations.len(), 1);
}

#[test]
fn errored_check_exits_three() {
    let mut c = small("z1_alpha1");
    // Radii far beyond the segment leave no admissible cylinder.
    c.checks = vec![check("phi", Expectation::Certified, CheckParams { radii: Some(vec![1000.0]), ..Default::default() })];
    let run = run_suite(&c, &SuiteOptions::default()).unwrap();
    assert_eq!(run.report.checks[0].report.verdict, Verdict::Errored);
    assert_eq!(run.report.exit_code(), 3);
}

#[test]
fn reports_are_deterministic() {
    let c = small("z1_alpha1");
    let a = run_suite(&c, &SuiteOptions::default()).unwrap();
    let b = run_suite(&c, &SuiteOptions { threads: Some(2), ..Default::default() }).unwrap();
    // Options are part of provenance; compare runs with identical options.
    let b2 = run_suite(&c, &SuiteOptions::default()).unwrap();
    assert_eq!(without_timestamp(&a.report), without_timestamp(&b2.report));
    assert_eq!(a.report.checks, b.report.checks);
}

#[test]
fn only_runs_the_named_check() {
    let c = small("z1_alpha1");
    let run = run_suite(&c, &SuiteOptions { only: Some("volume".into()), ..Default::default() }).unwrap();
    assert_eq!(run.report.checks.len(), 1);
    assert!(run_suite(&c, &SuiteOptions { only: Some("nope".into()), ..Default::default() }).is_err());
}

#[test]
fn report_round_trips_through_json() {
    let run = run_suite(&small("z1_alpha1"), &SuiteOptions::default()).unwrap();
    let text = render::canonical_json(&run.report).unwrap();
    let back: SuiteReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, run.report);
}

#[test]
fn written_outputs_match_the_run() {
    let mut c = small("dominance_z1");
    c.checks.push(check("hk", Expectation::Any, CheckParams::default()));
    let run = run_suite(&c, &SuiteOptions::default()).unwrap();
    let dir = std::env::temp_dir().join(format!("heatlab-suite-test-{}", std::process::id()));
    render::write_run(&run, &dir).unwrap();
    let report = std::fs::read_to_string(dir.join("report.json")).unwrap();
    assert!(report.contains("\"dominance\""));
    let points = std::fs::read_to_string(dir.join("points.csv")).unwrap();
    assert_eq!(points.lines().count(), 1 + run.report.points);
    let dom = std::fs::read_to_string(dir.join("dominance.csv")).unwrap();
    assert_eq!(dom.lines().count(), 1 + run.report.points);
    let svg = std::fs::read_to_string(dir.join("dominance_regions.svg")).unwrap();
    for class in ["diagonal", "gaussian", "jump"] {
        assert!(svg.contains(&format!("class=\"{class}\"")), "missing {class}");
    }
    assert!(dir.join("hk_ratios.svg").exists() && dir.join("kernel.bin").exists());
    std::fs::remove_dir_all(&dir).unwrap();
}
