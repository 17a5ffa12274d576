use std::path::Path;
use std::process::{Command, Output};

fn verify(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riesz-verify"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RIESZ_VERIFY_THREADS", "2")
        .output()
        .unwrap()
}

fn code(args: &[&str]) -> i32 {
    let dir = tempfile::tempdir().unwrap();
    verify(args, dir.path()).status.code().unwrap()
}

#[test]
fn passing_suite_exits_zero_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = verify(&["constants"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    for f in ["report.json", "report.csv", "plotdata_normbound.csv", "plotdata_embedding.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 failed"));
}

#[test]
fn bad_configuration_exits_two() {
    assert_eq!(code(&["nosuch"]), 2);
    assert_eq!(code(&["form1", "--d", "4"]), 2);
    assert_eq!(code(&["form1", "--d", "3", "--N", "17"]), 2);
    assert_eq!(code(&["ortho", "--alpha", "0.5"]), 2);
    assert_eq!(code(&["ortho", "--system", "laguerre-poly", "--alpha", "-2"]), 2);
    assert_eq!(code(&["constants", "--tol", "no.such.key=1"]), 2);
    assert_eq!(code(&["constants", "--p", "0.5"]), 2);
}

#[test]
fn out_of_range_parameters_exit_one() {
    assert_eq!(code(&["assumptions", "--system", "jacobi-poly", "--alpha", "-0.9", "--beta", "0"]), 1);
}

#[test]
fn single_system_form1_passes() {
    assert_eq!(code(&["form1", "--system", "hermite-poly", "--d", "2", "--N", "6"]), 0);
}

#[test]
fn unwritable_output_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = verify(&["constants"], &blocker);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("file"));
}
