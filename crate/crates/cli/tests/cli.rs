use std::path::Path;
use std::process::{Command, Output};

fn rsma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rsma"))
        .args(args)
        .env("RSMA_WORKERS", "2")
        .output()
        .unwrap()
}

fn write_spec(dir: &Path, blocklengths: &str) -> String {
    let path = dir.join("spec.json");
    let spec = format!(
        r#"{{"base": {{"users": 2, "tx_antennas": 1, "rx_antennas": 2, "power": 10, "blocklength": 500, "scheme": "noma"}},
            "axes": {{"snr_db": [10], "blocklength": {blocklengths}, "scheme": ["rsma", "noma"]}},
            "realizations": 2}}"#
    );
    std::fs::write(&path, spec).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn optimize_prints_a_summary_and_saves_the_design() {
    let dir = tempfile::tempdir().unwrap();
    let design = dir.path().join("design.json");
    let out = rsma(&[
        "optimize",
        "--users",
        "2",
        "--tx",
        "1",
        "--rx",
        "2",
        "--save",
        design.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("mmf"));
    let out = rsma(&["lls", design.to_str().unwrap(), "--frames", "3"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("max-min throughput"));
}

#[test]
fn sweep_writes_csv_and_resumes_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "[500]");
    let csv = dir.path().join("rows.csv");
    let out = rsma(&["sweep", &spec, "--out", csv.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 5);

    let jsonl = dir.path().join("rows.jsonl");
    for _ in 0..2 {
        let out = rsma(&["sweep", &spec, "--out", jsonl.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(std::fs::read_to_string(&jsonl).unwrap().lines().count(), 4);
}

#[test]
fn exit_codes_separate_config_errors_from_row_failures() {
    let dir = tempfile::tempdir().unwrap();
    let partial = write_spec(dir.path(), "[500, 0.5]");
    let out = rsma(&[
        "sweep",
        &partial,
        "--out",
        dir.path().join("p.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"base": {}}"#).unwrap();
    assert_eq!(
        rsma(&["sweep", bad.to_str().unwrap()]).status.code(),
        Some(1)
    );
    assert_eq!(
        rsma(&["sweep", "/nonexistent/spec.json"]).status.code(),
        Some(1)
    );
    assert_eq!(rsma(&["optimize", "--users", "0"]).status.code(), Some(1));
}

#[test]
fn oracle_grid_runs() {
    let out = rsma(&["oracle", "grid", "--points", "40"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("relative gap"));
}
