use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ca_alloc::model::serialize_scenario;
use ca_alloc::{CarrierId, Scenario};

fn ca_alloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ca-alloc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let body = r
        .records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect();
    (header, body)
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

fn run_preset(dir: &Path, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec!["run", "--preset", "section5", "--out", out];
    args.extend_from_slice(extra);
    ca_alloc(&args)
}

#[test]
fn symmetric_capacity_gives_equal_prices() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_preset(dir.path(), &["--set-capacity", "1=100"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, body) = rows(&dir.path().join("prices.csv"));
    assert_eq!(header, ["carrier_id", "offered_price", "allocation_price"]);
    assert_eq!(body.len(), 2);
    let (p1, p2) = (num(&body[0][1]), num(&body[1][1]));
    assert!((p1 - p2).abs() / p2 <= 1e-3);
}

#[test]
fn run_writes_every_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_preset(dir.path(), &["--set-capacity", "1=50"]);
    assert!(out.status.success());

    let (header, body) = rows(&dir.path().join("aggregates.csv"));
    assert_eq!(header, ["user_id", "r_agg"]);
    assert_eq!(body.len(), 9);
    let total: f64 = body.iter().map(|r| num(&r[1])).sum();
    assert!((total - 150.0).abs() / 150.0 <= 1e-3, "{total}");
    let agg = |u: &str| num(&body.iter().find(|r| r[0] == u).unwrap()[1]);
    assert!(agg("1") > agg("3"));

    let (header, body) = rows(&dir.path().join("allocations.csv"));
    assert_eq!(header, ["user_id", "carrier_id", "rate", "offset_used"]);
    // Three users on each carrier alone, three on both.
    assert_eq!(body.len(), 12);

    for c in [1, 2] {
        for phase in ["offered", "allocation"] {
            let (header, body) = rows(&dir.path().join(format!("trace_{c}_{phase}.csv")));
            assert_eq!(header, ["iteration", "price", "user_id", "w", "r"]);
            assert_eq!(body[0][0], "1");
            assert_eq!(body.len() % 6, 0);
        }
    }
}

#[test]
fn numbers_keep_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_preset(dir.path(), &[]).status.success());
    let (_, body) = rows(&dir.path().join("prices.csv"));
    let mantissa = body[0][1].split('e').next().unwrap();
    let digits = mantissa.chars().filter(char::is_ascii_digit).count();
    assert!(digits >= 12, "{}", body[0][1]);
    // The primary carrier sees a zero offset, not a negative zero.
    let alloc = fs::read_to_string(dir.path().join("allocations.csv")).unwrap();
    assert!(!alloc.contains("-0.000000000000000e0"));
}

#[test]
fn outputs_are_byte_stable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run_preset(a.path(), &["--set-capacity", "1=70"]).status.success());
    assert!(run_preset(b.path(), &["--set-capacity", "1=70"]).status.success());
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 7);
    for name in names {
        assert_eq!(
            fs::read(a.path().join(&name)).unwrap(),
            fs::read(b.path().join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn sweep_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = ca_alloc(&[
        "sweep",
        "--preset",
        "section5",
        "--sweep",
        "1=50:200:10",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let (header, body) = rows(&dir.path().join("sweep_prices.csv"));
    assert_eq!(header, ["R_value", "p1_offered", "p2_offered", "status"]);
    assert_eq!(body.len(), 16);
    assert!(body.iter().all(|r| r[3] == "ok"));
    let p1: Vec<f64> = body.iter().map(|r| num(&r[1])).collect();
    assert!(p1.windows(2).all(|w| w[1] < w[0]));

    let (header, body) = rows(&dir.path().join("sweep_aggregates.csv"));
    assert_eq!(header, ["R_value", "user_id", "r_agg"]);
    assert_eq!(body.len(), 16 * 9);
    let at50 = |u: &str| num(&body.iter().find(|r| r[0] == "50" && r[1] == u).unwrap()[2]);
    assert!(at50("1") > at50("3"));
}

#[test]
fn scenario_file_input() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.json");
    let s = Scenario::section5().with_capacity(CarrierId(2), 80.0).unwrap();
    fs::write(&path, serialize_scenario(&s)).unwrap();
    let out = ca_alloc(&[
        "run",
        "--scenario",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let (_, body) = rows(&dir.path().join("aggregates.csv"));
    let total: f64 = body.iter().map(|r| num(&r[1])).sum();
    assert!((total - 180.0).abs() / 180.0 <= 1e-3);
}

#[test]
fn missing_file_exits_with_io_code() {
    let out = ca_alloc(&["run", "--scenario", "/nonexistent/where.json", "--out", "/tmp"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/where.json"));
}

#[test]
fn malformed_file_exits_with_parse_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{\"carriers\": 3}").unwrap();
    let out = ca_alloc(&["run", "--scenario", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json"));
}

#[test]
fn non_convergence_exits_with_solver_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_preset(dir.path(), &["--max-iters", "1"]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).contains("did not converge"));
}

#[test]
fn bad_arguments_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_preset(dir.path(), &["--delta", "-1"]).status.code(), Some(2));
    assert_eq!(run_preset(dir.path(), &["--set-capacity", "9=10"]).status.code(), Some(2));
    assert_eq!(ca_alloc(&["run", "--out", "/tmp"]).status.code(), Some(2));
    let out = ca_alloc(&["sweep", "--preset", "section5", "--sweep", "1=200:50:10"]);
    assert_eq!(out.status.code(), Some(2));
}
