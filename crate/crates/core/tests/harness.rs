use std::fs;

use riesz_lab::harness::{self, emit, read_records_csv, read_report, Suite, SuiteConfig, EXIT_FAIL, EXIT_PASS};
use riesz_lab::orthosys::Family;

fn config(suite: Suite, seed: u64) -> SuiteConfig {
    let mut c = SuiteConfig::new(suite);
    c.seed = seed;
    c
}

#[test]
fn report_files_round_trip() {
    let rep = harness::run(&config(Suite::Constants, 0)).unwrap();
    assert_eq!(harness::exit_code(&rep), EXIT_PASS);
    let dir = tempfile::tempdir().unwrap();
    let written = emit(&rep, dir.path()).unwrap();
    assert_eq!(written.len(), 4);
    assert_eq!(read_report(&dir.path().join("report.json")).unwrap(), rep);
    assert_eq!(read_records_csv(&dir.path().join("report.csv")).unwrap(), rep.records);
    for r in &rep.records {
        assert_eq!(r.inputs_digest.len(), 16);
        assert!(!r.anchor.is_empty());
    }
}

#[test]
fn same_seed_gives_identical_csv() {
    let run_to = |seed: u64| {
        let dir = tempfile::tempdir().unwrap();
        let rep = harness::run(&config(Suite::Diffineq, seed)).unwrap();
        emit(&rep, dir.path()).unwrap();
        let csv = fs::read(dir.path().join("report.csv")).unwrap();
        (csv, rep)
    };
    let (a, rep) = run_to(7);
    let (b, _) = run_to(7);
    let (c, _) = run_to(8);
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(rep.passed(), "{:?}", rep.failures().collect::<Vec<_>>());
}

#[test]
fn failing_system_does_not_stop_the_others() {
    let cfg = config(Suite::Assumptions, 0).with_systems(vec![
        Family::HermitePoly,
        Family::JacobiPoly { alpha: -0.9, beta: 0.0 },
        Family::LaguerrePoly { alpha: 0.5 },
    ]);
    let rep = harness::run(&cfg).unwrap();
    assert_eq!(harness::exit_code(&rep), EXIT_FAIL);
    let failing: Vec<_> = rep.failures().collect();
    assert!(!failing.is_empty());
    assert!(failing.iter().all(|r| r.inputs.contains("jacobi-poly")));
    assert!(rep.records.iter().any(|r| r.pass && r.inputs.contains("hermite-poly")));
    assert!(rep.records.iter().any(|r| r.pass && r.inputs.contains("laguerre-poly")));
    assert_eq!(rep.summary.total, rep.summary.passed + rep.summary.failed);
}

#[test]
fn invalid_configuration_is_rejected_before_running() {
    let mut c = config(Suite::Form1, 0);
    c.d = Some(4);
    assert!(harness::run(&c).is_err());
    let c = config(Suite::Ortho, 0).with_systems(vec![Family::JacobiPoly { alpha: -1.5, beta: 0.0 }]);
    assert!(harness::run(&c).is_err());
}

#[test]
fn tolerance_override_can_fail_a_check() {
    let mut c = config(Suite::Diffineq, 0);
    c.tolerances.apply_override("diffineq.identity=1e-12").unwrap();
    let rep = harness::run(&c).unwrap();
    assert!(rep.failures().count() > 0);
    assert!(rep.failures().all(|r| r.check == "identity"));
    assert!(c.tolerances.apply_override("diffineq.identity=-1").is_err());
}
