use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn tiny_config(max_iter: usize) -> String {
    format!(
        r#"{{
  "name": "tiny",
  "model": {{
    "lambda_floor": "1/4", "beta": "1/2", "decay": "7/10", "discount": "2/10", "loading": "2/10",
    "claim_law": {{"kind": "exponential", "rate": "10"}},
    "jump_law": {{"kind": "exponential", "rate": "1/2"}}
  }},
  "grid": {{"delta": "28/423", "delta_lambda": "23/240", "m_max": 3}},
  "solver": {{"tol": 1e-9, "max_iter": {max_iter}, "quadrature_order": 16}},
  "mc": {{"n_paths": 4000, "seed": 11, "probe_cells": [[0, 0], [10, 2], [30, 1]]}},
  "moments": {{"times": [0.5, 1], "n_paths": 4000}}
}}"#
    )
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("config.json"), config).unwrap();
        Self { dir }
    }

    fn config(&self) -> PathBuf {
        self.dir.path().join("config.json")
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str], out: &str) -> Output {
        self.run_with_env(args, out, &[])
    }

    fn run_with_env(&self, args: &[&str], out: &str, env: &[(&str, &str)]) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_catdiv"));
        cmd.args(args)
            .arg("--config")
            .arg(self.config())
            .arg("--out")
            .arg(self.out(out));
        for (k, v) in env {
            cmd.env(k, v);
        }
        cmd.output().unwrap()
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap()
}

#[test]
fn solve_writes_surface_and_report() {
    let ws = Workspace::new(&tiny_config(1_000_000));
    let out = ws.run(&["solve"], "a");
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&ws.out("a").join("value_surface.csv"));
    assert_eq!(csv.lines().next(), Some("n,m,x,lambda,value,action"));
    let report: serde_json::Value = serde_json::from_str(&read(&ws.out("a").join("solve_report.json"))).unwrap();
    assert_eq!(report["premium_exact"], "141/700");
    assert_eq!(report["m_max"], 3);
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let ws = Workspace::new(&tiny_config(1_000_000));
    assert_eq!(code(&ws.run(&["solve"], "a")), 0);
    assert_eq!(code(&ws.run_with_env(&["solve"], "b", &[("CATDIV_THREADS", "1")])), 0);
    for file in ["value_surface.csv", "solve_report.json"] {
        assert_eq!(read(&ws.out("a").join(file)), read(&ws.out("b").join(file)), "{file}");
    }

    for dir in ["a", "b"] {
        let threads = if dir == "a" { "3" } else { "1" };
        let out = ws.run_with_env(&["simulate"], dir, &[("CATDIV_THREADS", threads)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(
        read(&ws.out("a").join("simulate_report.json")),
        read(&ws.out("b").join("simulate_report.json"))
    );
}

#[test]
fn moments_table_has_header_and_rows() {
    let ws = Workspace::new(&tiny_config(1_000_000));
    let out = ws.run(&["moments"], "m");
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&ws.out("m").join("moments.csv"));
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("lambda0,t,intensity_exact,intensity_mc,intensity_se,cumulative_exact,cumulative_mc,cumulative_se")
    );
    // Two starting intensities times two horizons.
    assert_eq!(lines.count(), 4);
}

#[test]
fn compare_writes_table() {
    let ws = Workspace::new(&tiny_config(1_000_000));
    let out = ws.run(&["compare", "--mode", "same-p-floor"], "c");
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&ws.out("c").join("compare_same_p_floor.csv"));
    assert_eq!(csv.lines().next(), Some("n,x,value,value_cl,difference,violation"));
}

#[test]
fn input_errors_exit_with_2() {
    let ws = Workspace::new(&tiny_config(1_000_000));
    let missing = Command::new(env!("CARGO_BIN_EXE_catdiv"))
        .args(["solve", "--config", "/nonexistent/config.json"])
        .output()
        .unwrap();
    assert_eq!(code(&missing), 2);

    let bad = Workspace::new(&tiny_config(1_000_000).replace("\"m_max\": 3", "\"m_max\": 3, \"spacing\": 1"));
    assert_eq!(code(&bad.run(&["solve"], "x")), 2);

    let negative = Workspace::new(&tiny_config(1_000_000).replace("\"decay\": \"7/10\"", "\"decay\": \"-7/10\""));
    assert_eq!(code(&negative.run(&["solve"], "x")), 2);

    assert_eq!(
        code(&ws.run_with_env(&["solve"], "x", &[("CATDIV_THREADS", "zero")])),
        2
    );
    // No surface to simulate from yet.
    assert_eq!(code(&ws.run(&["simulate"], "empty")), 2);
}

#[test]
fn non_convergence_exits_with_3() {
    let ws = Workspace::new(&tiny_config(2));
    let out = ws.run(&["solve"], "a");
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn failed_checks_exit_with_4() {
    let ws = Workspace::new(&tiny_config(1_000_000));
    assert_eq!(code(&ws.run(&["solve"], "a")), 0);
    // Inflate every value so the simulated strategy can no longer match it.
    let path = ws.out("a").join("value_surface.csv");
    let text = read(&path);
    let mut lines = text.lines();
    let mut tampered = format!("{}\n", lines.next().unwrap());
    for line in lines {
        let mut f: Vec<String> = line.split(',').map(str::to_string).collect();
        f[4] = (f[4].parse::<f64>().unwrap() + 1.0).to_string();
        tampered.push_str(&f.join(","));
        tampered.push('\n');
    }
    fs::write(&path, tampered).unwrap();
    let out = ws.run(&["simulate"], "a");
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&read(&ws.out("a").join("simulate_report.json"))).unwrap();
    assert_eq!(report["passed"], false);
}
