use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pdmarket"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn stderr_lines(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stderr)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("stderr line is not JSON ({e}): {l}")))
        .collect()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn validate(schema: &str, doc: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema").join(schema);
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
}

fn write_temp(dir: &tempfile::TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Independent evaluation of the smoothed kinked curve: slope `2a` below the
/// kink, `2(1-a)` above, with a quadratic blend of half-width `delta`.
fn kinked(a: f64, delta: f64, s: f64) -> f64 {
    let (s1, s2) = (2.0 * a, 2.0 * (1.0 - a));
    let lo = 0.5 - delta;
    if s <= lo {
        s1 * s
    } else if s >= 0.5 + delta {
        s2 * s + 2.0 * a - 1.0
    } else {
        let t = s - lo;
        s1 * lo + s1 * t + (s2 - s1) * t * t / (4.0 * delta)
    }
}

#[test]
fn identity_market_solves_to_unit_prices() {
    let out = run(&["solve", scenario("identity.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let r = stdout_json(&out);
    validate("solve-report.schema.json", &r);
    for p in floats(&r["prices"]) {
        assert!((p - 1.0).abs() <= 1e-9);
    }
    assert!(r["middleman_profit"].as_f64().unwrap().abs() <= 1e-9);
    assert_eq!(r["converged"], Value::Bool(true));
}

#[test]
fn kinked_market_equilibrium_is_asymmetric() {
    let out = run(&["solve", scenario("kinked.json").to_str().unwrap(), "--case", "quasiconcave"]);
    assert_eq!(out.status.code(), Some(0));
    let r = stdout_json(&out);
    validate("solve-report.schema.json", &r);
    let u = floats(&r["utilities"]);

    // 1-D grid oracle over the split of the single good
    let (a, delta) = (0.25, 0.01);
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 0..=100_000 {
        let x = k as f64 / 100_000.0;
        let (f1, f2) = (kinked(a, delta, x), kinked(a, delta, 1.0 - x));
        if f1 > 0.0 && f2 > 0.0 {
            let obj = f1.ln() + f2.ln();
            if obj > best.0 {
                best = (obj, (f1 - f2).abs());
            }
        }
    }
    let asym = (u[0] - u[1]).abs();
    assert!(asym >= 0.05);
    assert!((asym - best.1).abs() <= 1e-3, "solver {asym} vs oracle {}", best.1);
    assert!(r["objective"].as_f64().unwrap() >= best.0 - 1e-6);
}

#[test]
fn malformed_json_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_temp(&dir, "bad.json", "{\"goods\": 2,\n \"buyers\": [ }");
    let out = run(&["solve", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    let e = &stderr_lines(&out)[0];
    assert_eq!(e["kind"], "parse");
    assert_eq!(e["line"], 2);
    assert!(e["column"].as_u64().unwrap() > 0);
}

#[test]
fn schema_violations_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (r#"{"goods": 1, "buyers": [{"money": "one", "utility": {"expr": "x1"}}]}"#, "buyers[0].money"),
        (
            r#"{"goods": 2, "buyers": [{"money": 1, "utility": {"family": "ces", "params": {"weights": [1, 1]}}}]}"#,
            "buyers[0].utility.params",
        ),
        (
            r#"{"goods": 1, "buyers": [{"money": 1, "utility": {"expr": "x1"}}, {"money": 1, "utility": {"family": "leontief"}}]}"#,
            "buyers[1].utility.family",
        ),
        (r#"{"goods": 2, "buyers": [{"money": 1, "utility": {"expr": "x1 + x3"}}]}"#, "buyers[0].utility.expr"),
        (r#"{"goods": 1, "buyers": [], "extra": 1}"#, "extra"),
    ];
    for (k, (text, field)) in cases.iter().enumerate() {
        let p = write_temp(&dir, &format!("s{k}.json"), text);
        let out = run(&["solve", p.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(1), "{text}");
        let e = &stderr_lines(&out)[0];
        assert_eq!(e["kind"], "schema", "{e}");
        assert_eq!(e["field"], *field, "{e}");
    }
}

#[test]
fn invalid_market_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_temp(&dir, "neg.json", r#"{"goods": 1, "buyers": [{"money": -1, "utility": {"expr": "x1"}}]}"#);
    let out = run(&["solve", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_lines(&out)[0]["level"], "error");
}

#[test]
fn solve_report_verifies_at_the_same_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    for (name, extra) in [("mixed.json", None), ("identity.json", None), ("kinked.json", Some("quasiconcave"))] {
        let s = scenario(name);
        let mut args = vec!["solve", s.to_str().unwrap(), "--tol", "1e-7"];
        if let Some(case) = extra {
            args.extend(["--case", case]);
        }
        let out = run(&args);
        assert_eq!(out.status.code(), Some(0), "{name}");
        let report = write_temp(&dir, "report.json", std::str::from_utf8(&out.stdout).unwrap());
        let out = run(&["verify", s.to_str().unwrap(), report.to_str().unwrap(), "--tol", "1e-7"]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stdout));
        let v = stdout_json(&out);
        validate("verify-report.schema.json", &v);
        assert_eq!(v["passed"], Value::Bool(true));
    }
}

#[test]
fn verify_rejects_a_wrong_price() {
    let dir = tempfile::tempdir().unwrap();
    let sol = write_temp(&dir, "sol.json", r#"{"allocation": [[1, 0], [0, 1]], "prices": [1, 0.5]}"#);
    let out = run(&["verify", scenario("identity.json").to_str().unwrap(), sol.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stdout_json(&out)["passed"], Value::Bool(false));
}

#[test]
fn identity_rates_are_one() {
    let out = run(&["rates", scenario("identity.json").to_str().unwrap(), "--prices", "1,1"]);
    assert_eq!(out.status.code(), Some(0));
    let r = stdout_json(&out);
    for b in r["buyers"].as_array().unwrap() {
        assert!((b["r_star"].as_f64().unwrap() - 1.0).abs() <= 1e-6);
    }
}

#[test]
fn rate_curve_csv_has_the_documented_columns() {
    let out = run(&["rates", scenario("mixed.json").to_str().unwrap(), "--format", "csv", "--buyer", "1", "--points", "9"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("r,U,capped"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 9);
    let mut prev: Option<(f64, f64)> = None;
    for row in &rows {
        let (r, u): (f64, f64) = (row[0].parse().unwrap(), row[1].parse().unwrap());
        assert!(row[2] == "true" || row[2] == "false");
        if let Some((pr, pu)) = prev {
            assert!(r > pr);
            if row[2] == "false" {
                assert!(u <= pu + 1e-8);
            }
        }
        prev = Some((r, u));
    }
}

#[test]
fn csv_is_refused_outside_rates() {
    let out = run(&["solve", scenario("identity.json").to_str().unwrap(), "--format", "csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_lines(&out)[0]["kind"], "usage");
}

#[test]
fn second_welfare_fails_on_the_kinked_market() {
    let out = run(&[
        "welfare",
        scenario("kinked.json").to_str().unwrap(),
        "--mode",
        "second",
        "--target",
        "0.25,0.25",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let e = &stderr_lines(&out)[0];
    assert_eq!(e["kind"], "no_supporting_hyperplane");
    assert!(e["message"].as_str().unwrap().contains("no supporting hyperplane"));
}

#[test]
fn second_welfare_round_trip_on_a_linear_split() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_temp(
        &dir,
        "split.json",
        r#"{"goods": 1, "buyers": [
            {"money": 1, "utility": {"family": "linear", "params": {"coeffs": [1]}}},
            {"money": 1, "utility": {"family": "linear", "params": {"coeffs": [1]}}}]}"#,
    );
    let out = run(&["welfare", p.to_str().unwrap(), "--mode", "second", "--target", "0.3,0.7", "--step", "0.001"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = stdout_json(&out);
    let m = floats(&r["second_welfare"]["moneys"]);
    assert!((m[0] / m[1] - 3.0 / 7.0).abs() <= 1e-3);
    assert!(r["round_trip_error"].as_f64().unwrap() <= 1e-3);
}

#[test]
fn first_welfare_passes_at_equilibrium() {
    let out = run(&["welfare", scenario("mixed.json").to_str().unwrap(), "--mode", "first", "--step", "0.05"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["pareto"]["pareto_ok"], Value::Bool(true));
}

#[test]
fn counterexample_report_shows_the_gap() {
    let out = run(&["counterexample", "--a", "0.25"]);
    assert_eq!(out.status.code(), Some(0));
    let r = &stdout_json(&out)["report"];
    let asym = r["asymmetry"].as_f64().unwrap();
    assert!(asym >= 0.05 && (asym - 0.32).abs() <= 0.03, "{asym}");
    assert!(r["best_equilibrium_gap"].as_f64().unwrap() >= 0.05);
}

#[test]
fn oracle_matches_identity_optimum() {
    let out = run(&["oracle", scenario("identity.json").to_str().unwrap(), "--step", "0.05"]);
    assert_eq!(out.status.code(), Some(0));
    let r = stdout_json(&out);
    assert_eq!(r["allocation"], serde_json::json!([[1.0, 0.0], [0.0, 1.0]]));
    assert_eq!(r["objective"].as_f64(), Some(0.0));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let s = scenario("kinked.json");
    let args = ["solve", s.to_str().unwrap(), "--case", "quasiconcave", "--seed", "7", "--starts", "16"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.stdout, b.stdout);
    let mixed = scenario("mixed.json");
    let a = run(&["rates", mixed.to_str().unwrap()]);
    let b = run(&["rates", mixed.to_str().unwrap()]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn floats_carry_seventeen_significant_digits() {
    let out = run(&["solve", scenario("mixed.json").to_str().unwrap()]);
    let v = stdout_json(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    let p0 = v["prices"][0].as_f64().unwrap();
    assert!(text.contains(&format!("[{p0:.16e},")));
}

#[test]
fn usage_errors_are_json_on_stderr() {
    let out = run(&["solve"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_lines(&out)[0]["kind"], "usage");
    let out = run(&["solve", "/definitely/not/here.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_lines(&out)[0]["kind"], "io");
}

#[test]
fn non_convergence_exits_two() {
    let out = run(&["solve", scenario("mixed.json").to_str().unwrap(), "--max-iter", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stdout_json(&out)["converged"], Value::Bool(false));
    assert_eq!(stderr_lines(&out)[0]["kind"], "not_converged");
}
