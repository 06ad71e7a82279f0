use std::path::Path;
use std::process::{Command, Output};

use pmm::cli::{manifest_path, read_records, Format, RunManifest};

fn pmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmm"))
        .args(args)
        .output()
        .unwrap()
}

fn pmm_with_threads(threads: &str, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmm"))
        .env("PMM_THREADS", threads)
        .args(args)
        .output()
        .unwrap()
}

fn run_ok(args: &[&str]) -> String {
    let out = pmm(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn csv_header_and_rows() {
    let text = run_ok(&[
        "rate",
        "--scheme",
        "pmm",
        "--tx",
        "3",
        "--rx",
        "2",
        "--snr-db",
        "0:4:2",
        "--channels",
        "10",
    ]);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scheme,N,M,Q,detector,power,snr_db,metric,value,stderr,count,seed"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("pmm,3,2,4,none,table2,0.0,rate,"));
}

#[test]
fn json_output_parses_and_matches_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("a.csv");
    let json = dir.path().join("a.json");
    let args = [
        "ser", "--tx", "2", "--rx", "2", "--snr-db", "0:10:10", "--bits", "10000", "--seed", "4",
    ];
    run_ok(&[&args[..], &["--out", path_arg(&csv)]].concat());
    run_ok(&[&args[..], &["--out", path_arg(&json), "--format", "json"]].concat());
    let a = read_records(&csv, Format::Csv).unwrap();
    let b = read_records(&json, Format::Json).unwrap();
    assert_eq!(a, b);
    let metrics: Vec<&str> = a
        .iter()
        .filter(|r| r.snr_db == 0.0)
        .map(|r| r.metric.as_str())
        .collect();
    assert!(metrics.contains(&"ser"));
    assert!(metrics.contains(&"ser_wilson_low"));
    assert!(metrics.contains(&"permutation_error_rate"));
}

#[test]
fn manifest_records_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rate.csv");
    run_ok(&[
        "rate",
        "--scheme",
        "gsm",
        "--tx",
        "4",
        "--rx",
        "4",
        "--snr-db",
        "5",
        "--channels",
        "4",
        "--seed",
        "12",
        "--out",
        path_arg(&out),
    ]);
    let text = std::fs::read_to_string(manifest_path(&out)).unwrap();
    let manifest: RunManifest = serde_json::from_str(&text).unwrap();
    assert_eq!(manifest.tool, "pmm");
    assert_eq!(manifest.master_seed, 12);
    assert_eq!(manifest.outputs, vec![path_arg(&out).to_string()]);
}

#[test]
fn thread_count_does_not_change_results() {
    let args = [
        "ser", "--tx", "3", "--rx", "3", "--snr-db", "0:10:5", "--bits", "12000", "--seed", "8",
    ];
    let one = pmm_with_threads("1", &args);
    let four = pmm_with_threads("4", &args);
    assert!(one.status.success() && four.status.success());
    assert_eq!(one.stdout, four.stdout);

    let rate = [
        "rate",
        "--tx",
        "4",
        "--rx",
        "4",
        "--snr-db",
        "0:20:10",
        "--channels",
        "30",
    ];
    assert_eq!(
        pmm_with_threads("1", &rate).stdout,
        pmm_with_threads("3", &rate).stdout
    );
}

#[test]
fn seeds_change_monte_carlo_output() {
    let a = run_ok(&[
        "ser", "--tx", "2", "--rx", "2", "--snr-db", "5", "--bits", "10000", "--seed", "1",
    ]);
    let b = run_ok(&[
        "ser", "--tx", "2", "--rx", "2", "--snr-db", "5", "--bits", "10000", "--seed", "2",
    ]);
    assert_ne!(a, b);
}

#[test]
fn complexity_table() {
    let text = run_ok(&["complexity", "--tx", "4", "--rx", "4", "--mod-order", "2,4"]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "N,M,Q,r,ml_flops,zf_flops,zf_flops_direct,ratio");
    assert!(lines
        .iter()
        .any(|l| l.starts_with("4,4,4,16,241664,680,528,")));
    assert_eq!(lines.len(), 3);
}

#[test]
fn codec_table_for_four_antennas_has_sixteen_rows() {
    let text = run_ok(&["codec", "--tx", "4"]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 16);
    assert_eq!(lines[15], "1111: [0 0 1 0; 0 1 0 0; 0 0 0 1; 1 0 0 0]");
}

#[test]
fn optimize_reports_gain_per_point() {
    let text = run_ok(&[
        "optimize",
        "--tx",
        "2",
        "--channels",
        "5",
        "--snr-db",
        "0:10:10",
    ]);
    let gains: Vec<f64> = text
        .lines()
        .filter(|l| l.contains(",gain,"))
        .map(|l| l.split(',').nth(8).unwrap().parse().unwrap())
        .collect();
    assert_eq!(gains.len(), 2);
    assert!(gains.iter().all(|&g| g >= -1e-9));
}

#[test]
fn power_file_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("power.txt");
    std::fs::write(&file, "0.7\n0.3\n").unwrap();
    let text = run_ok(&[
        "ser",
        "--tx",
        "2",
        "--rx",
        "2",
        "--snr-db",
        "10",
        "--bits",
        "10000",
        "--power",
        "file",
        "--power-file",
        path_arg(&file),
    ]);
    assert!(text.lines().nth(1).unwrap().contains(",file,"));

    std::fs::write(&file, "0.5\n0.5\n").unwrap();
    let out = pmm(&[
        "ser",
        "--tx",
        "2",
        "--rx",
        "2",
        "--snr-db",
        "10",
        "--bits",
        "10000",
        "--power",
        "file",
        "--power-file",
        path_arg(&file),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not distinct"));
}

#[test]
fn invalid_input_exits_with_an_error() {
    for args in [
        vec!["ser", "--tx", "2", "--rx", "2", "--bits", "10"],
        vec!["ser", "--tx", "4", "--rx", "2", "--detector", "zf"],
        vec!["ser", "--tx", "3", "--rx", "3", "--power", "pa2"],
        vec!["codec", "--tx", "1"],
    ] {
        let out = pmm(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(
            String::from_utf8_lossy(&out.stderr).starts_with("error: "),
            "{args:?}"
        );
    }
}

#[test]
fn malformed_arguments_are_usage_errors() {
    for args in [
        vec!["rate", "--tx", "2", "--rx", "2", "--snr-db", "10:0:1"],
        vec!["rate", "--tx", "2", "--rx", "2", "--scheme", "ofdm"],
        vec!["ser", "--tx", "2"],
    ] {
        assert_eq!(pmm(&args).status.code(), Some(2), "{args:?}");
    }
}
