use std::path::Path;
use std::process::{Command, Output};

use pindelay::DirectedGraph;
use serde_json::Value;

fn pindelay(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pindelay"))
        .args(args)
        .current_dir(dir)
        .env_remove("PINDELAY_THREADS")
        .output()
        .expect("run pindelay")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json(out: &Output) -> Value {
    assert_eq!(code(out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const SINGLETON: &str = r#"{"n": 1, "edges": []}"#;
const PAIR: &str = r#"{"n": 2, "edges": [[0, 1, 1.0], [1, 0, 1.0]]}"#;
const PATH3: &str = r#"{"n": 3, "edges": [[1, 0, 1.0], [0, 1, 1.0], [2, 1, 1.0], [1, 2, 1.0]]}"#;

#[test]
fn generate_writes_reloadable_graph() {
    let dir = tempfile::tempdir().unwrap();
    let out = pindelay(dir.path(), &["generate", "--n", "100", "--p", "0.03", "--seed", "7", "--out", "g.json"]);
    let v = json(&out);
    assert_eq!(v["tool_version"], "pindelay 0.1.0");
    assert_eq!(v["seed"], 7);
    assert!(v["command"].as_str().unwrap().starts_with("pindelay generate"));
    let loaded = DirectedGraph::load(dir.path().join("g.json")).unwrap();
    assert_eq!(loaded, pindelay::graph::erdos_renyi(100, 0.03, 7).unwrap());
}

#[test]
fn generate_without_links_gives_empty_graph() {
    let dir = tempfile::tempdir().unwrap();
    json(&pindelay(dir.path(), &["generate", "--n", "3", "--p", "0", "--seed", "1", "--out", "e.json"]));
    assert_eq!(DirectedGraph::load(dir.path().join("e.json")).unwrap(), DirectedGraph::empty(3));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "g.json", PAIR);
    for args in [
        &["generate", "--n", "3", "--p", "2", "--out", "x.json"][..],
        &["sweep", "--graph", "g.json", "--pins", "0", "--axis", "c=", "--out", "s.csv"],
        &["sweep", "--graph", "g.json", "--pins", "0", "--out", "s.csv"],
        &["bound", "--graph", "g.json", "--method", "nonsense"],
        &["check"],
    ] {
        assert_eq!(code(&pindelay(dir.path(), args)), 2, "{args:?}");
    }
    let bad = Command::new(env!("CARGO_BIN_EXE_pindelay"))
        .args(["check", "--graph", "g.json"])
        .current_dir(dir.path())
        .env("PINDELAY_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&bad), 2);
}

#[test]
fn domain_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "path.json", PATH3);
    let lambert = pindelay(
        dir.path(),
        &["bound", "--graph", "path.json", "--pins", "0", "--method", "lambert", "--tau", "0.1"],
    );
    assert_eq!(code(&lambert), 3);
    assert!(String::from_utf8_lossy(&lambert.stderr).contains("not normalized"));
    assert_eq!(code(&pindelay(dir.path(), &["check", "--graph", "missing.json"])), 3);
    assert_eq!(code(&pindelay(dir.path(), &["check", "--graph", "path.json", "--pins", "7"])), 3);
    assert_eq!(
        code(&pindelay(dir.path(), &["bound", "--graph", "path.json", "--pins", "0,1", "--method", "tau-pm"])),
        3
    );
}

#[test]
fn numerical_failure_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "one.json", SINGLETON);
    // the state overflows within the first segment
    let out = pindelay(
        dir.path(),
        &["lyapunov", "--graph", "one.json", "--pins", "0", "--c", "1e200", "--tau-p", "0.1", "--segments", "50", "--samples", "16"],
    );
    assert_eq!(code(&out), 4);
}

#[test]
fn singleton_delay_bound_is_quarter_period() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "one.json", SINGLETON);
    let v = json(&pindelay(dir.path(), &["bound", "--graph", "one.json", "--pins", "0", "--c", "1", "--method", "taup-star"]));
    let value = v["result"]["value"].as_f64().unwrap();
    assert!((value - std::f64::consts::FRAC_PI_2).abs() < 1e-5);
    assert_eq!(v["result"]["kind"], "tau_p_star");
}

#[test]
fn pair_single_pin_bound_matches_root_crossing() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "pair.json", PAIR);
    let v = json(&pindelay(dir.path(), &["bound", "--graph", "pair.json", "--pins", "0", "--c", "1", "--method", "tau-pm"]));
    let bound = v["result"]["value"].as_f64().unwrap();
    let re = |tau: f64| {
        let t = tau.to_string();
        let r = json(&pindelay(dir.path(), &["roots", "--graph", "pair.json", "--pins", "0", "--c", "1", "--tau-p", &t]));
        r["result"]["dominant"]["re"].as_f64().unwrap()
    };
    assert!(re(0.98 * bound) < 0.0);
    assert!(re(1.02 * bound) > 0.0);
}

#[test]
fn config_supplies_values_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "one.json", SINGLETON);
    write(
        dir.path(),
        "cfg.json",
        r#"{"schema": "pindelay-config/1", "graph": "one.json", "pins": [0], "c": 2.0, "seed": 11}"#,
    );
    let from_cfg = json(&pindelay(dir.path(), &["--config", "cfg.json", "bound", "--method", "taup-star"]));
    assert_eq!(from_cfg["seed"], 11);
    let v = from_cfg["result"]["value"].as_f64().unwrap();
    assert!((v - std::f64::consts::FRAC_PI_4).abs() < 1e-5, "{v}");
    let flagged = json(&pindelay(dir.path(), &["bound", "--config", "cfg.json", "--method", "taup-star", "--c", "1"]));
    let v = flagged["result"]["value"].as_f64().unwrap();
    assert!((v - std::f64::consts::FRAC_PI_2).abs() < 1e-5, "{v}");

    write(dir.path(), "old.json", r#"{"schema": "pindelay-config/0"}"#);
    assert_eq!(code(&pindelay(dir.path(), &["--config", "old.json", "check"])), 2);
}

#[test]
fn zero_delays_fall_back_to_matrix_abscissa() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "pair.json", PAIR);
    let v = json(&pindelay(dir.path(), &["lyapunov", "--graph", "pair.json", "--pins", "0", "--c", "1"]));
    assert_eq!(v["result"]["method"], "undelayed_abscissa");
    assert!(v["result"]["note"].is_string());
}

#[test]
fn stable_and_unstable_points_near_the_single_pin_bound() {
    // points 10% on either side of the bound, as in a stability-region plot
    let dir = tempfile::tempdir().unwrap();
    json(&pindelay(dir.path(), &["generate", "--n", "10", "--p", "0.4", "--seed", "2", "--connected", "--out", "g.json"]));
    let b = json(&pindelay(dir.path(), &["bound", "--graph", "g.json", "--pins", "0", "--c", "4", "--method", "tau-pm"]));
    let bound = b["result"]["value"].as_f64().unwrap();
    let exponent = |tau: f64| {
        let t = tau.to_string();
        let v = json(&pindelay(
            dir.path(),
            &["lyapunov", "--graph", "g.json", "--pins", "0", "--c", "4", "--tau-p", &t, "--segments", "200", "--samples", "32"],
        ));
        v["result"]["value"].as_f64().unwrap()
    };
    assert!(exponent(0.9 * bound) < 0.0);
    assert!(exponent(1.1 * bound) > 0.0);
}

#[test]
fn simulate_writes_trajectory_csv() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "pair.json", PAIR);
    let out = pindelay(
        dir.path(),
        &["simulate", "--graph", "pair.json", "--pins", "0", "--tau-p", "0.5", "--s", "2", "--horizon", "40", "--stride", "10"],
    );
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,y0,y1");
    let last: Vec<f64> = lines.last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((last[0] - 40.0).abs() < 1e-9);
    // converged to the target
    assert!((last[1] - 2.0).abs() < 1e-3 && (last[2] - 2.0).abs() < 1e-3, "{last:?}");
}

#[test]
fn sweep_marks_failed_cells_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "pair.json", PAIR);
    // tau-pm needs one pin; with two pinned nodes every bound cell fails but
    // the characteristic roots still fill in
    let v = json(&pindelay(
        dir.path(),
        &[
            "sweep", "--graph", "pair.json", "--pins", "0,1", "--axis", "c=0.5,1", "--axis", "tau_p=0.1,0.2,0.3",
            "--methods", "bound,charroots", "--bound", "tau-pm", "--out", "s.csv",
        ],
    ));
    assert_eq!(v["result"]["cells"], 6);
    assert_eq!(v["result"]["error_cells"], 6);
    assert!(v["label"].as_str().unwrap().contains("own-seed analog"));
    let csv = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 7);
    let header: Vec<&str> = rows[0].split(',').collect();
    let status = header.iter().position(|h| *h == "status").unwrap();
    let root = header.iter().position(|h| *h == "root_re").unwrap();
    for (i, r) in rows[1..].iter().enumerate() {
        let f: Vec<&str> = r.split(',').collect();
        assert_eq!(f.len(), header.len());
        assert_eq!(f[0], i.to_string());
        assert_eq!(f[status], "ERROR");
        assert!(f[root].parse::<f64>().unwrap() < 0.0);
    }
    let script = std::fs::read_to_string(dir.path().join("s.gp")).unwrap();
    assert!(script.contains("'s.csv'"));
}

#[test]
fn sweep_output_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "path.json", PATH3);
    let args = [
        "sweep", "--graph", "path.json", "--pins", "1", "--tau-r", "0.2", "--axis", "c=0.5:2:4", "--axis", "tau_p_c=0.5,1",
        "--methods", "charroots,small-c,large-c", "--out", "s.csv",
    ];
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = Command::new(env!("CARGO_BIN_EXE_pindelay"))
            .args(args)
            .current_dir(dir.path())
            .env("PINDELAY_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
        outputs.push((out.stdout, std::fs::read(dir.path().join("s.csv")).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
}
