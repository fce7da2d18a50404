use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn qpi(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qpi"));
    cmd.args(args).env_remove("QPI_OUT_DIR");
    if let Some(d) = out_env {
        cmd.env("QPI_OUT_DIR", d);
    }
    cmd.output().expect("qpi runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Data rows as parsed floats, after checking the comment and header lines.
fn parse_csv(text: &str, header: &str) -> Vec<Vec<String>> {
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# "), "config comment line");
    assert_eq!(lines.next().unwrap(), header);
    lines.map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn f(cell: &str) -> f64 {
    cell.parse().unwrap()
}

#[test]
fn validation_errors_exit_two() {
    assert_eq!(code(&qpi(&["branches", "--s", "1+2j"], None)), 2);
    assert_eq!(code(&qpi(&["iterate", "--q", "1"], None)), 2);
    assert_eq!(code(&qpi(&["no-such-command"], None)), 2);
    assert_eq!(code(&qpi(&["branches", "--out-dir", "/definitely/not/here", "--out", "b.csv"], None)), 2);
    assert_eq!(code(&qpi(&["--help"], None)), 0);
}

#[test]
fn numerical_failure_exits_three() {
    // Vanishing shots at real q are ill-conditioned at this check index.
    let o = qpi(&["shoot", "--target", "vanishing", "--q", "1.05", "--n-check", "150", "--seed-w0", "0.5", "--seed-w1", "0.5"], None);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn output_directory_from_environment() {
    let env_dir = TempDir::new().unwrap();
    let flag_dir = TempDir::new().unwrap();
    let o = qpi(&["singularities", "--out-dir", flag_dir.path().to_str().unwrap(), "--out", "s.csv"], Some(env_dir.path()));
    assert_eq!(code(&o), 0);
    assert!(env_dir.path().join("s.csv").is_file());
    assert!(!flag_dir.path().join("s.csv").exists());
    let cfg: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(env_dir.path().join("s.config.json")).unwrap()).unwrap();
    assert_eq!(cfg["command"], "singularities");
    assert_eq!(cfg["params"]["k"], "-1..1");
}

#[test]
fn singularities_closed_form() {
    let rows = parse_csv(&stdout(&qpi(&["singularities", "--k", "-2..2"], None)), "k,label,s_re,s_im,type_a_branch");
    assert_eq!(rows.len(), 5);
    let re = (256.0f64 / 27.0).ln() / 3.0;
    for r in rows {
        let k: f64 = f(&r[0]);
        assert!((f(&r[2]) - re).abs() < 1e-6);
        assert!((f(&r[3]) - 2.0 * std::f64::consts::PI * k / 3.0).abs() < 1e-6);
    }
}

#[test]
fn branches_print_six_digit_scientific() {
    let text = stdout(&qpi(&["branches", "--s", "20"], None));
    let rows = parse_csv(&text, "s_re,s_im,branch,w_re,w_im,residual");
    assert_eq!(rows.len(), 4);
    let w3 = rows.iter().find(|r| r[2] == "3").unwrap();
    assert_eq!(w3[3].len(), "1.000000e+00".len());
    assert!((f(&w3[3]) - 1.0).abs() < 1e-6);
    for r in &rows {
        let mantissa = r[3].trim_start_matches('-').split('e').next().unwrap();
        assert_eq!(mantissa.len(), 8, "{}", r[3]);
    }
}

#[test]
fn stokes_map_is_deterministic_and_styled() {
    let style_dir = TempDir::new().unwrap();
    let style = style_dir.path().join("style.json");
    std::fs::write(&style, "{}").unwrap();
    // Same relative names in two directories, so the config lines agree too.
    let run = || {
        let dir = TempDir::new().unwrap();
        let args = ["stokes-map", "--max-arc", "3", "--out", "m.csv", "--svg", "m.svg", "--style", style.to_str().unwrap()];
        assert_eq!(code(&qpi(&args, Some(dir.path()))), 0);
        (std::fs::read(dir.path().join("m.csv")).unwrap(), std::fs::read_to_string(dir.path().join("m.svg")).unwrap())
    };
    let (csv1, svg1) = run();
    let (csv2, svg2) = run();
    assert!(csv1 == csv2, "CSV bytes differ between runs");
    assert_eq!(svg1, svg2);
    assert_eq!(svg1.matches("class=\"stokes\"").count(), 2);
    assert_eq!(svg1.matches("class=\"anti-stokes\"").count(), 3);
    assert_eq!(svg1.matches("class=\"cut\"").count(), 1);
    assert_eq!(svg1.matches("class=\"singularity\"").count(), 1);
    assert!(svg1.contains("stroke-dasharray"));
}

#[test]
fn x_plane_uses_the_exponential_map() {
    let text = stdout(&qpi(&["stokes-map", "--max-arc", "2", "--plane", "x"], None));
    let rows = parse_csv(&text, "kind,anchor,s_re,s_im,x_re,x_im,curve");
    assert!(!rows.is_empty());
    for r in rows {
        let modulus = f(&r[4]).hypot(f(&r[5]));
        let want = f(&r[2]).exp();
        assert!((modulus - want).abs() <= 1e-5 * want, "{r:?}");
    }
}

#[test]
fn iterate_default_tends_to_omega() {
    let rows = parse_csv(&stdout(&qpi(&["iterate", "--n", "600"], None)), "n,x_re,x_im,w_re,w_im,residual");
    assert_eq!(rows.len(), 601);
    let last = rows.last().unwrap();
    assert!((f(&last[3]) + 0.5).abs() < 1e-2 && (f(&last[4]) - 0.75f64.sqrt()).abs() < 1e-2, "{last:?}");
}

#[test]
fn shoot_reports_json() {
    let o = qpi(&["shoot"], None);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["objective"].as_f64().unwrap() < 1e-10);
    assert!(v["w0"].is_string());
}

#[test]
fn compare_at_q_1_05() {
    let o = qpi(&["compare"], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = parse_csv(&stdout(&o), "n,s,w_re,w_im,approx_re,approx_im,error");
    assert!(rows.iter().all(|r| f(&r[6]) < 1e-4));
}
