use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attrib-etl")).args(args).output().expect("binary runs")
}

fn synth(dir: &Path, days: &str) {
    let out = run(&[
        "synth",
        "--n-assets",
        "6",
        "--n-days",
        days,
        "--classes",
        "3",
        "--riskfree-yield",
        "1.5",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, "50");
    synth(&b, "50");
    for f in ["prices.csv", "partition.json", "riskfree.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let prices = fs::read_to_string(a.join("prices.csv")).unwrap();
    assert_eq!(prices.lines().count(), 51);
}

#[test]
fn missing_partition_is_an_input_error_with_no_output() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "40");
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "backtest",
        "--prices",
        data.join("prices.csv").to_str().unwrap(),
        "--partition",
        tmp.path().join("nope.json").to_str().unwrap(),
        "--window",
        "20",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
    assert!(!tmp.path().join("out.partial").exists());
}

#[test]
fn backtest_rerun_and_attrib_stats() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "60");
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "backtest",
        "--prices",
        data.join("prices.csv").to_str().unwrap(),
        "--partition",
        data.join("partition.json").to_str().unwrap(),
        "--riskfree",
        data.join("riskfree.csv").to_str().unwrap(),
        "--strategies",
        "P0,P2,P5",
        "--alphas",
        "0.9",
        "--window",
        "30",
        "--moving-window",
        "10",
        "--quiet",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(matches!(out.status.code(), Some(0 | 3)), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["manifest.json", "risk_table.csv", "no_solution_rates.csv", "moving_risk.csv", "attrib_stats.csv"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    let weights = fs::read_to_string(out_dir.join("P2_90").join("weights.csv")).unwrap();
    // 60 prices, 59 returns, 29 evaluated days plus the header.
    assert_eq!(weights.lines().count(), 30);

    let again = tmp.path().join("again");
    let out = run(&["rerun", "--manifest", out_dir.to_str().unwrap(), "--out", again.to_str().unwrap(), "--quiet"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = run(&["attrib-stats", out_dir.join("P2_90").to_str().unwrap(), out_dir.join("P5_90").to_str().unwrap()]);
    assert!(out.status.success());
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(table.lines().count(), 1 + 6);
    assert!(table.lines().skip(1).all(|l| l.starts_with("P2_90,") || l.starts_with("P5_90,")));
}
