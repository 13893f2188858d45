use std::path::Path;
use std::process::{Command, Output};

use cubicwave::io::{KeyValues, Table};
use cubicwave::RunRecord;

fn cubicwave(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cubicwave"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn evolve_writes_a_readable_record() {
    let dir = tempfile::tempdir().unwrap();
    let o = cubicwave(dir.path(), &["evolve", "--amplitude", "2", "--cells", "64", "--max-tau", "4", "--snapshot-tau", "0,2,4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rec = RunRecord::read(dir.path().join("out"), "run").unwrap();
    assert_eq!(rec.status, "completed");
    assert_eq!(rec.snapshots.len(), 3);
    assert_eq!(rec.config.get("cells"), Some("64"));
    assert_eq!(rec.config.get("amplitude"), Some("2"));
    assert!(!dir.path().join("out/run.FAILED").exists());
}

#[test]
fn rerun_from_stored_config_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let first = ["evolve", "--amplitude", "3", "--cells", "64", "--max-tau", "3", "--name", "first"];
    assert_eq!(code(&cubicwave(dir.path(), &first)), 0);
    let manifest = KeyValues::load(dir.path().join("out/first.manifest")).unwrap();
    let mut cfg = KeyValues::new();
    for (k, v) in manifest.iter() {
        if let Some(rest) = k.strip_prefix("config.") {
            cfg.set(rest, v);
        }
    }
    cfg.save(dir.path().join("again.cfg")).unwrap();
    assert_eq!(code(&cubicwave(dir.path(), &["evolve", "--config", "again.cfg", "--name", "second"])), 0);
    let a = std::fs::read(dir.path().join("out/first.series.csv")).unwrap();
    let b = std::fs::read(dir.path().join("out/second.series.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&cubicwave(dir.path(), &["evolve", "--no-such-flag"])), 1);
    assert_eq!(code(&cubicwave(dir.path(), &["evolve", "--cells", "64"])), 1, "missing amplitude");
    assert_eq!(code(&cubicwave(dir.path(), &["evolve", "--amplitude", "1", "--courant", "3"])), 1);
    std::fs::write(dir.path().join("bad.cfg"), "amplitude = 1\nmystery = 4\n").unwrap();
    assert_eq!(code(&cubicwave(dir.path(), &["evolve", "--config", "bad.cfg"])), 1);
    assert_eq!(code(&cubicwave(dir.path(), &["reproduce-figure", "12"])), 1);
    assert_eq!(code(&cubicwave(dir.path(), &["--help"])), 0);
}

#[test]
fn step_limit_leaves_failed_marker() {
    let dir = tempfile::tempdir().unwrap();
    let o = cubicwave(dir.path(), &["evolve", "--amplitude", "1", "--cells", "64", "--max-tau", "5", "--max-steps", "10"]);
    assert_eq!(code(&o), 2);
    assert!(dir.path().join("out/run.FAILED").exists());
    let rec = RunRecord::read(dir.path().join("out"), "run").unwrap();
    assert!(rec.is_failed());
    assert!(!rec.series.is_empty(), "partial output kept");
}

#[test]
fn blowup_without_blowup_is_indeterminate() {
    let dir = tempfile::tempdir().unwrap();
    let o = cubicwave(dir.path(), &["blowup", "--amplitude", "0.5", "--cells", "64", "--max-tau", "5"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn hyperboloidal_blowup_rate() {
    let dir = tempfile::tempdir().unwrap();
    let o = cubicwave(dir.path(), &["blowup", "--amplitude", "4", "--cells", "200", "--max-tau", "5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let kv = KeyValues::load(dir.path().join("out/blowup.summary")).unwrap();
    let slope = kv.get_f64("rate_slope").unwrap().unwrap();
    assert!((slope + 1.0).abs() < 0.02, "slope {slope}");
    assert_eq!(kv.get_f64("rho").unwrap(), Some(0.0));
}

#[test]
fn converge_writes_q() {
    let dir = tempfile::tempdir().unwrap();
    let o = cubicwave(dir.path(), &["converge", "--amplitude", "2", "--cells", "50", "--max-tau", "6", "--sample-dt", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = Table::load(dir.path().join("out/converge.csv")).unwrap();
    assert_eq!(t.columns, ["tau", "Q_50_100_200"]);
    let q = t.column("Q_50_100_200").unwrap();
    let last = *q.last().unwrap();
    assert!(last > 4.5 && last < 7.5, "Q = {last}");
}

#[test]
fn power_index_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = cubicwave(
        dir.path(),
        &["power-index", "--amplitude", "1", "--cells", "64", "--max-tau", "10", "--rho", "0,1", "--radius", "20"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = Table::load(dir.path().join("out/power.csv")).unwrap();
    assert_eq!(t.columns, ["tau", "p_rho=0", "p_rho=1", "p_r=20"]);
}

#[test]
fn fit_recovers_seeded_member() {
    let dir = tempfile::tempdir().unwrap();
    let o = cubicwave(
        dir.path(),
        &[
            "fit", "--data", "attractor", "--a", "0.5", "--b", "0.2", "--cells", "100", "--max-tau", "15", "--method",
            "space", "--tau-start", "2",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let kv = KeyValues::load(dir.path().join("out/fit.fit")).unwrap();
    let (a, b) = (kv.get_f64("a").unwrap().unwrap(), kv.get_f64("b").unwrap().unwrap());
    assert!((a - 0.5).abs() < 1e-5 && (b - 0.2).abs() < 1e-5, "({a}, {b})");
    assert!(dir.path().join("out/fit.modulation.csv").exists());
}

#[test]
fn bisect_bad_bracket_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    // both ends disperse: the bracket does not contain the threshold
    let o = cubicwave(
        dir.path(),
        &["bisect", "--mode", "critical", "--lo", "0.5", "--hi", "0.6", "--cells", "64", "--max-tau", "5"],
    );
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn standard_chart_blowup() {
    let dir = tempfile::tempdir().unwrap();
    let o = cubicwave(dir.path(), &["blowup", "--solver", "standard", "--cells", "400", "--amplitude", "4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let kv = KeyValues::load(dir.path().join("out/standard.manifest")).unwrap();
    let slope = kv.get_f64("difference_slope").unwrap().unwrap();
    assert!((slope - 2.0).abs() < 0.1, "slope {slope}");
    assert!(Table::load(dir.path().join("out/standard.difference.csv")).unwrap().rows.len() > 10);
}
