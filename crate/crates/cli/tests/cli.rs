use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_accrue-calib"));
    c.env("ACCRUE_CALIB_THREADS", "1");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stderr).unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn bundled() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/three_input.csv")
}

fn rows(path: &str) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn key(report: &str, k: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{k}=")))
        .unwrap_or_else(|| panic!("no {k} in report:\n{report}"))
        .parse()
        .unwrap()
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (p(dir.path(), "a.csv"), p(dir.path(), "b.csv"));
    ok(&["generate", "--scenario", "A", "--n", "10000", "--seed", "7", "--out", &a]);
    ok(&["generate", "--scenario", "A", "--n", "10000", "--seed", "7", "--out", &b]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let r = rows(&a);
    assert_eq!(r[0], ["x_1", "m", "y"]);
    assert_eq!(r.len(), 10_001);
    for row in &r[1..] {
        let x: f64 = row[0].parse().unwrap();
        assert!((0.0..=1.0).contains(&x));
        assert_eq!(row[1].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn generated_gamma_errors_are_nonpositive() {
    let out = run(&["generate", "--scenario", "GammaMisspec", "--n", "2000", "--seed", "1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for line in text.lines().skip(1) {
        let y: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(y <= 0.0);
    }
}

#[test]
fn csv_files_round_trip_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let a = p(dir.path(), "a.csv");
    ok(&["generate", "--scenario", "E", "--n", "500", "--seed", "3", "--out", &a]);
    let data = accrue_core::io::read_pairs_file(Path::new(&a)).unwrap();
    let b = p(dir.path(), "b.csv");
    accrue_core::io::write_pairs_file(Path::new(&b), &data).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn calibrate_predict_evaluate_on_scenario_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "a.csv");
    let model = p(dir.path(), "m.txt");
    let preds = p(dir.path(), "pred.csv");
    ok(&["generate", "--scenario", "A", "--n", "3000", "--seed", "2", "--out", &data]);
    let report = ok(&[
        "calibrate", "--data", &data, "--family", "tpg", "--members", "3", "--seed", "4",
        "--max-epochs", "80", "--out", &model,
    ]);
    let beta = key(&report, "tpg.beta_star");
    assert!((1..=9).any(|i| (beta - i as f64 / 10.0).abs() < 1e-12), "{beta}");
    assert!(key(&report, "tpg.median_test_loss").is_finite());

    ok(&["predict", "--model", &model, "--data", &data, "--out", &preds]);
    let r = rows(&preds);
    assert_eq!(r[0], ["x_1", "m", "median", "lo50", "hi50", "lo95", "hi95"]);
    assert_eq!(r.len(), 3001);
    for row in &r[1..] {
        let v: Vec<f64> = row[2..].iter().map(|s| s.parse().unwrap()).collect();
        assert!(v[3] <= v[1] && v[1] <= v[0] && v[0] <= v[2] && v[2] <= v[4], "{row:?}");
    }

    let fresh = p(dir.path(), "fresh.csv");
    ok(&["generate", "--scenario", "A", "--n", "1000", "--seed", "99", "--out", &fresh]);
    for f in [&data, &fresh] {
        let ev = ok(&["evaluate", "--model", &model, "--data", f]);
        let (b, c, rs) = (key(&ev, "beta"), key(&ev, "crps"), key(&ev, "rs"));
        assert_eq!(key(&ev, "accrue"), b * c + (1.0 - b) * rs);
        assert!(ev.contains("metric"));
    }
}

#[test]
fn perfect_predictions_have_zero_mae() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "d.csv");
    let model = p(dir.path(), "m.txt");
    ok(&["generate", "--scenario", "B", "--n", "600", "--seed", "1", "--out", &data]);
    ok(&[
        "calibrate", "--data", &data, "--family", "al", "--members", "1", "--beta", "0.5",
        "--max-epochs", "5", "--out", &model,
    ]);
    let exact = p(dir.path(), "exact.csv");
    std::fs::write(&exact, "x_1,m,y\n0.1,2,2\n0.5,-1,-1\n0.9,0.25,0.25\n").unwrap();
    let ev = ok(&["evaluate", "--model", &model, "--data", &exact]);
    assert_eq!(key(&ev, "mae"), 0.0);
}

#[test]
fn single_member_warns() {
    let dir = tempfile::tempdir().unwrap();
    let model = p(dir.path(), "m.txt");
    let report = ok(&[
        "calibrate", "--scenario", "D", "--n", "800", "--test-n", "300", "--family", "al",
        "--members", "1", "--beta", "0.3", "--max-epochs", "20", "--out", &model,
    ]);
    assert!(report.contains("warning: --members 1"));
    assert!(report.contains("beta search skipped"));
}

#[test]
fn gaussian_model_median_is_the_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let model = p(dir.path(), "g.txt");
    let preds = p(dir.path(), "pred.csv");
    ok(&[
        "calibrate", "--data", bundled().to_str().unwrap(), "--family", "gaussian",
        "--members", "2", "--beta", "0.5", "--max-epochs", "20", "--out", &model,
    ]);
    ok(&["predict", "--model", &model, "--data", bundled().to_str().unwrap(), "--out", &preds]);
    let r = rows(&preds);
    assert_eq!(r.len(), 3001);
    for row in &r[1..] {
        let m: f64 = row[3].parse().unwrap();
        let med: f64 = row[4].parse().unwrap();
        assert!((m - med).abs() < 1e-10);
    }
}

#[test]
fn dimension_mismatch_fails() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "a.csv");
    let model = p(dir.path(), "m.txt");
    ok(&["generate", "--scenario", "A", "--n", "400", "--seed", "2", "--out", &data]);
    ok(&[
        "calibrate", "--data", &data, "--family", "tpg", "--members", "1", "--beta", "0.5",
        "--max-epochs", "3", "--out", &model,
    ]);
    let out = run(&["predict", "--model", &model, "--data", bundled().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension"));
}

#[test]
fn malformed_csv_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = p(dir.path(), "bad.csv");
    std::fs::write(&bad, "x_1,m,y\n0.1,0,1\n0.2,0,oops\n").unwrap();
    let out = run(&["calibrate", "--data", &bad, "--out", &p(dir.path(), "m.txt")]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
    std::fs::write(&bad, "x_1,m,y\n0.1,0,NaN\n").unwrap();
    let out = run(&["calibrate", "--data", &bad, "--out", &p(dir.path(), "m.txt")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_flags_fail() {
    assert!(!run(&["calibrate", "--scenario", "A", "--beta", "0.25", "--out", "/dev/null"]).status.success());
    assert!(!run(&["calibrate", "--scenario", "A", "--members", "0", "--out", "/dev/null"]).status.success());
    assert!(!run(&["generate", "--scenario", "Z"]).status.success());
}

#[test]
fn curves_export_predicted_and_true_bands() {
    let dir = tempfile::tempdir().unwrap();
    let model = p(dir.path(), "m.txt");
    let curves = p(dir.path(), "c.csv");
    ok(&[
        "calibrate", "--scenario", "A", "--n", "800", "--test-n", "200", "--family", "tpg",
        "--members", "1", "--beta", "0.5", "--max-epochs", "10", "--out", &model,
    ]);
    ok(&["curves", "--model", &model, "--scenario", "A", "--points", "11", "--out", &curves]);
    let r = rows(&curves);
    assert_eq!(r.len(), 12);
    assert_eq!(r[0].len(), 11);
}
