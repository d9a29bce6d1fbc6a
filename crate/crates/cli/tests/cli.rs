use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ustwind(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ustwind")).current_dir(dir).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn same_seed_gives_identical_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"experiment": "hitting-stats", "domain": {"shape": "disc", "outer_radius": 12, "inner_radius": 0},
            "marked": {"inner_angles": [0.0, 3.14159]}, "run": {"seed": 7, "samples": 600}}"#,
    );
    for out in ["a.csv", "b.csv"] {
        let o = ustwind(dir.path(), &["hitting-stats", "--config", &cfg, "--out", out]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (a, b) = (fs::read(dir.path().join("a.csv")).unwrap(), fs::read(dir.path().join("b.csv")).unwrap());
    assert_eq!(a, b);
    let other = ustwind(dir.path(), &["hitting-stats", "--config", &cfg, "--seed", "8", "--out", "c.csv"]);
    assert!(other.status.success());
    assert_ne!(a, fs::read(dir.path().join("c.csv")).unwrap());
}

#[test]
fn every_row_carries_seed_and_stream() {
    let dir = tempfile::tempdir().unwrap();
    let o = ustwind(dir.path(), &["loop-soup", "--samples", "200", "--seed", "11", "--out", "soup.csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("soup.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "seed,stream,loops,noncontractible,odd_winding,total_winding");
    for (i, line) in lines.enumerate() {
        assert!(line.starts_with(&format!("11,{i},")), "{line}");
    }
}

#[test]
fn winding_cf_reports_mc_and_exact_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = ustwind(dir.path(), &["winding-cf", "--samples", "2000", "--out", "cf.csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("cf.csv")).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    for col in ["mc_re", "mc_im", "mc_stderr_re", "mc_stderr_im", "exact_re", "exact_im"] {
        assert!(header.contains(&col), "missing {col}");
    }
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn verify_fomin_passes_on_the_oracle_lattice() {
    let dir = tempfile::tempdir().unwrap();
    let o = ustwind(dir.path(), &["verify-fomin", "--format", "json", "--out", "vf.json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("vf.json")).unwrap()).unwrap();
    assert!(doc["summary"]["max_abs_diff"].as_f64().unwrap() <= 1e-8);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("vf.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    for key in ["seed", "version", "wall_time_seconds"] {
        assert!(!manifest[key].is_null(), "manifest lacks {key}");
    }
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"run": {"seed": 1, "sampels": 10}}"#);
    assert_eq!(ustwind(dir.path(), &["dbm", "--config", &cfg]).status.code(), Some(2));
    let cfg = write_config(dir.path(), r#"{"run": {"dt": 0.5}}"#);
    assert_eq!(ustwind(dir.path(), &["dbm", "--config", &cfg]).status.code(), Some(2));
    assert_eq!(ustwind(dir.path(), &["dbm", "--config", "missing.json"]).status.code(), Some(2));
}

#[test]
fn failed_check_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"run": {"tolerance": {"exact": 1e-30, "sigmas": 3, "relative": 0.05}}}"#);
    assert_eq!(ustwind(dir.path(), &["verify-fomin", "--config", &cfg]).status.code(), Some(1));
}

#[test]
fn acceptance_report_lists_each_criterion_once() {
    let dir = tempfile::tempdir().unwrap();
    let o = ustwind(dir.path(), &["acceptance", "--suite", "exact", "--out", "report.json"]);
    // the loop-mass slope criterion fails at the prescribed moduli
    assert_eq!(o.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let ids: Vec<u64> = report["results"].as_array().unwrap().iter().map(|r| r["id"].as_u64().unwrap()).collect();
    assert_eq!(ids, vec![1, 2, 6, 7, 11]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("criterion")).count(), 5);
}

#[test]
fn dbm_and_trace_write_paths() {
    let dir = tempfile::tempdir().unwrap();
    let o = ustwind(dir.path(), &["dbm", "--samples", "2", "--out", "dbm.csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    // 1001 grid points thinned by 10, two paths, one header
    assert_eq!(fs::read_to_string(dir.path().join("dbm.csv")).unwrap().lines().count(), 2 * 101 + 1);
    let o = ustwind(dir.path(), &["trace", "--out", "trace.csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(text.lines().skip(1).all(|l| {
        let f: Vec<f64> = l.split(',').skip(5).map(|x| x.parse().unwrap()).collect();
        f[0].hypot(f[1]) < 1.0
    }));
}
