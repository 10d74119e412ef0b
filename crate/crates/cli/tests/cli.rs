use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn losmimo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_losmimo")).args(args).output().expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_owned()
}

#[test]
fn end_to_end_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = losmimo(&["end-to-end", "--trials", "2", "--Nsf", "2", "--out", &out_arg(dir)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["end_to_end.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name} differs");
    }
    let csv = fs::read_to_string(a.join("end_to_end.csv")).unwrap();
    assert!(csv.starts_with("# config: {"));
    assert!(csv.lines().nth(1).unwrap().starts_with("trial,method,direction,stream"));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, "preset = \"end-to-end\"\nnot_a_setting = 3\n").unwrap();
    let out = losmimo(&["--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not_a_setting"));
}

#[test]
fn missing_preset_and_bad_flags_exit_2() {
    assert_eq!(losmimo(&[]).status.code(), Some(2));
    assert_eq!(losmimo(&["end-to-end", "--trials", "0"]).status.code(), Some(2));
    assert_eq!(losmimo(&["seq-design", "--methods", "proposed"]).status.code(), Some(2));
    assert_eq!(losmimo(&["timing-sweep", "--no-such-flag"]).status.code(), Some(2));
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("run.toml");
    let out_dir = tmp.path().join("ts");
    fs::write(&path, format!("preset = \"timing-sweep\"\ntrials = 1\nxpd-db = 5.0\nout = {:?}\n", out_arg(&out_dir))).unwrap();
    let out = losmimo(&["--config", path.to_str().unwrap(), "--xpd-db", "10"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("timing_sweep.csv")).unwrap();
    let grid: Vec<&str> = csv.lines().skip(2).map(|l| l.split(',').next().unwrap()).collect();
    assert!(!grid.is_empty());
    assert!(grid.iter().all(|x| *x == "10.0"), "{grid:?}");
}

#[test]
fn timing_sweep_covers_the_xpd_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let out = losmimo(&["timing-sweep", "--trials", "1", "--out", &out_arg(tmp.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("timing_sweep.csv")).unwrap();
    for xpd in ["0.0", "5.0", "10.0", "15.0", "20.0", "25.0", "30.0"] {
        assert!(csv.lines().any(|l| l.starts_with(&format!("{xpd},"))), "missing xpd {xpd}");
    }
}

#[test]
fn seq_design_meets_isolation_target() {
    let tmp = tempfile::tempdir().unwrap();
    let out = losmimo(&["seq-design", "--out", &out_arg(tmp.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("isolation.json")).unwrap()).unwrap();
    let designed = &report["families"][0];
    assert_eq!(designed["family"], "designed");
    assert!(designed["worst_db"].as_f64().unwrap() <= -60.0);
    assert!(report["margin_over_classical_db"].as_f64().unwrap() >= 20.0);
    let rows = fs::read_to_string(tmp.path().join("sequences.csv")).unwrap().lines().count();
    assert_eq!(rows, 2 + 8 * 256);
}
