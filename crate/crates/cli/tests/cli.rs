use std::path::Path;
use std::process::{Command, Output};

fn colombeau(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_colombeau")).args(args).output().expect("binary runs")
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn list_is_sorted_anchored_and_stable() {
    let a = colombeau(&["list"]);
    let b = colombeau(&["list"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines.len() >= 8);
    assert!(lines.iter().all(|l| l.contains('§')));
    let ids: Vec<&str> = lines.iter().map(|l| l.split_whitespace().next().unwrap()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
}

#[test]
fn mechanics_single_eps() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("mech");
    let o = colombeau(&["run", "mechanics", "--eps", "1e-3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["pass"], true);
    assert_eq!(r["results"]["limit_check"]["pass"], true);
    let csv = std::fs::read_to_string(out.join("series/trajectory_eps_1e-3.csv")).unwrap();
    assert!(csv.starts_with("t,q,p,E\n"));
    assert!(csv.lines().count() > 1000);
}

#[test]
fn pullback_demo_reports_moderate_one_and_association() {
    let tmp = tempfile::tempdir().unwrap();
    let o = colombeau(&["run", "--experiment", "pullback-demo", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(tmp.path());
    let verdict = &r["results"]["order0"]["fit"]["verdict"];
    assert_eq!(verdict["kind"], "moderate");
    assert_eq!(verdict["n"], 1);
    assert_eq!(r["results"]["associated_to_zero"], true);
}

#[test]
fn usage_errors_exit_2_without_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    let bad_config = tmp.path().join("bad.json");
    std::fs::write(&bad_config, "{\"experiment\": \"stokes\", \"grid\": ").unwrap();
    let unknown_key = tmp.path().join("unknown.json");
    std::fs::write(&unknown_key, "{\"experiment\": \"stokes\", \"gird\": \"4..9\"}").unwrap();
    let o = out.to_str().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["run", "no-such-experiment", "--out", o],
        vec!["run", "--config", bad_config.to_str().unwrap(), "--out", o],
        vec!["run", "--config", unknown_key.to_str().unwrap(), "--out", o],
        vec!["run", "classify", "--grid", "9..4", "--out", o],
        vec!["run", "classify", "--mollifier", "gausspoly:x", "--out", o],
        vec!["run", "stokes", "--tol", "relative=-1", "--out", o],
        vec!["run", "stokes", "--tol", "nonsense=1", "--out", o],
        vec!["run", "--out", o],
        vec!["frobnicate"],
    ];
    for args in cases {
        let r = colombeau(&args);
        assert_eq!(r.status.code(), Some(2), "{args:?}");
        assert!(!out.exists(), "{args:?} wrote files");
    }
}

#[test]
fn failed_check_exits_1_with_report() {
    let tmp = tempfile::tempdir().unwrap();
    let o = colombeau(&["run", "mechanics", "--eps", "1e-2", "--tol", "limit=1e-6", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let r = report(tmp.path());
    assert_eq!(r["pass"], false);
    assert!(r["checks"].as_array().unwrap().iter().any(|c| c["pass"] == false));
}

#[test]
fn reports_are_deterministic_and_flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, "{\"experiment\": \"classify\", \"mmax\": 5, \"seed\": 9}").unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = colombeau(&["run", "--config", cfg.to_str().unwrap(), "--mmax", "7", "--out", d.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    let ra = std::fs::read(a.join("report.json")).unwrap();
    assert_eq!(ra, std::fs::read(b.join("report.json")).unwrap());
    assert_eq!(std::fs::read(a.join("series/sup_norms.csv")).unwrap(), std::fs::read(b.join("series/sup_norms.csv")).unwrap());
    let r = report(&a);
    assert_eq!(r["config"]["mmax"], 7);
    assert_eq!(r["config"]["seed"], 9);
}
