use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const FIXTURE: &str = "y,x,w\n0,1,a\n1,1,a\n0,0,a\n1,0,a\n";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cdep-bounds"))
}

fn write(dir: &TempDir, name: &str, contents: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn run(args: &[&str], data: &Path) -> Output {
    bin().args(args).arg("--data").arg(data).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn convert_symmetric_lambda() {
    let out = bin().args(["convert", "--p1", "0.5", "--lambda", "2"]).output().unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("c_lo = 0.333333333333, c_hi = 0.666666666667"), "{text}");
    assert!(text.contains("lambda_lo = 0.5, lambda_hi = 2"), "{text}");
}

#[test]
fn convert_from_c_bounds() {
    let out = bin().args(["convert", "--p1", "0.5", "--c-lo", "0.3", "--c-hi", "0.7"]).output().unwrap();
    assert!(out.status.success());
    assert!(stdout(&out).contains("lambda_hi = 2.33333333333"));
}

#[test]
fn convert_rejects_invalid_sensitivity() {
    let out = bin().args(["convert", "--p1", "0.5", "--c-lo", "0.6", "--c-hi", "0.7"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fixture_ate_at_lambda_one_is_a_point() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", FIXTURE);
    let out_path = dir.path().join("r.csv");
    let out = bin()
        .args(["bounds", "--estimand", "ate", "--grid", "1:2:1", "--out"])
        .arg(&out_path)
        .arg("--data")
        .arg(&data)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&out_path).unwrap();
    let rows: Vec<_> = csv.lines().filter(|l| l.starts_with("ate,")).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains(",0,0,collapsed_sensitivity"), "{}", rows[0]);
    assert!(csv.contains("# input sha256: "));
    assert!(dir.path().join("r.txt").exists());
}

#[test]
fn missing_column_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", "y,t,w\n0,1,a\n");
    let out = run(&["bounds", "--estimand", "ate"], &data);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing column"));
}

#[test]
fn non_binary_treatment_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", "y,x,w\n0,2,a\n1,0,a\n");
    assert_eq!(run(&["bounds", "--estimand", "ate"], &data).status.code(), Some(2));
}

#[test]
fn overlap_failure_exits_with_three() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", FIXTURE);
    let out = run(&["bounds", "--estimand", "ate", "--epsilon-overlap", "0.45"], &data);
    assert!(out.status.success(), "p1 = 0.5 is inside [0.45, 0.55]");
    let data = write(&dir, "e.csv", "y,x,w\n0,1,a\n1,1,a\n0,1,a\n1,0,a\n0,1,b\n1,0,b\n");
    let out = run(&["bounds", "--estimand", "ate", "--epsilon-overlap", "0.3"], &data);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn drop_nonoverlap_reweights_remaining_cells() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", "y,x,w\n0,1,a\n1,1,a\n0,0,b\n1,0,b\n1,1,b\n");
    let out = run(&["bounds", "--estimand", "ate", "--drop-nonoverlap"], &data);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("dropped cells: a"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", FIXTURE);
    let config = write(&dir, "c.toml", "epsilon = 0.1\n");
    let out = bin()
        .args(["bounds", "--config"])
        .arg(&config)
        .arg("--data")
        .arg(&data)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn breakdown_reports_a_lambda() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", "y,x,w\n0,1,a\n2,1,a\n0,0,a\n1,0,a\n");
    let out = run(&["breakdown", "--estimand", "ate", "--target", "0"], &data);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("breakdown ate target=0: lambda="), "{text}");
    assert!(!text.contains("not reached"), "{text}");
}

#[test]
fn oracle_check_passes_on_fixture() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", FIXTURE);
    let out = run(&["oracle-check", "--grid", "1:3:0.5", "--resolution", "100"], &data);
    assert!(out.status.success(), "{}", stdout(&out));
}

#[test]
fn stdout_report_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", "y,x,w\n0,1,a\n1,1,a\n0,0,a\n2,0,a\n1,1,b\n3,0,b\n0,0,b\n");
    let args = ["bounds", "--estimand", "qte", "--estimand", "dte", "--tau", "0.5", "--z", "0", "--grid", "1:3:0.5"];
    let a = run(&args, &data);
    let b = run(&args, &data);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}
