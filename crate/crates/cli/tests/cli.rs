use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn pfmsd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pfmsd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p
}

fn first_order(n: usize) -> String {
    format!(
        r#"{{"loop": {{"order": 1, "a": [1.0], "b": [1.0], "quantizer": {{"levels": 2}}}},
            "input": {{"x_dc": 0.4, "tones": [{{"amplitude": 0.3, "frequency": 0.0071}}]}},
            "n": {n}, "spurs": {{"q_max": 3, "r_max": 2}}}}"#
    )
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run(dir: &TempDir, cmd: &str, cfg: &Path, extra: &[&str]) -> Output {
    let out = dir.path().join("out");
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    pfmsd(&args)
}

#[test]
fn first_order_compare_is_exact() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", &first_order(32768));
    let o = run(&dir, "compare", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("EXACT MATCH (32768 samples)"));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/match.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["match"], true);
}

#[test]
fn overload_prints_mismatch_index() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"loop": {"order": 2, "a": [1.0, 1.0], "b": [1.0, 1.5], "quantizer": {"levels": 2}},
            "input": {"x_dc": 0.5, "tones": [{"amplitude": 0.3, "frequency": 0.004}]}, "n": 4096}"#,
    );
    let o = run(&dir, "compare", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("MISMATCH at sample "), "{}", stdout(&o));
}

#[test]
fn zero_last_feedback_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"loop": {"order": 2, "a": [1.0, 1.0], "b": [1.0, 0.0], "quantizer": {"levels": 5}},
            "input": {"x_dc": 2.0}, "n": 64}"#,
    );
    let o = run(&dir, "simulate", &cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("b"));
}

#[test]
fn zero_length_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", &first_order(0));
    assert_eq!(run(&dir, "simulate", &cfg, &[]).status.code(), Some(2));
}

#[test]
fn bad_nfft_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", &first_order(1024));
    assert_eq!(run(&dir, "spectrum", &cfg, &["--nfft", "1000"]).status.code(), Some(2));
    assert_eq!(run(&dir, "spectrum", &cfg, &["--nfft", "2048"]).status.code(), Some(2));
    assert_eq!(run(&dir, "spectrum", &cfg, &["--nfft", "256"]).status.code(), Some(0));
}

#[test]
fn missing_or_malformed_config_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(run(&dir, "simulate", &missing, &[]).status.code(), Some(2));
    let broken = write_config(dir.path(), "b.json", "{\"loop\": ");
    assert_eq!(run(&dir, "simulate", &broken, &[]).status.code(), Some(2));
    assert_eq!(pfmsd(&["simulate"]).status.code(), Some(2));
    assert_eq!(pfmsd(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn instability_is_a_runtime_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"loop": {"order": 1, "a": [1.0], "b": [-1.0], "quantizer": {"levels": 4}},
            "input": {"x_dc": 1.0}, "n": 400000}"#,
    );
    let o = run(&dir, "simulate", &cfg, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unstable"));
}

#[test]
fn outputs_carry_the_config_hash_and_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", &first_order(2048));
    let read = |name: &str| std::fs::read(dir.path().join("out").join(name)).unwrap();
    assert_eq!(run(&dir, "simulate", &cfg, &[]).status.code(), Some(0));
    assert_eq!(run(&dir, "spurs", &cfg, &[]).status.code(), Some(0));
    let canonical = read("config.json");
    let hash: String = Sha256::digest(&canonical)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    let first: Vec<Vec<u8>> = ["ctsd_trace.csv", "pfm_trace.csv", "spurs.csv"]
        .iter()
        .map(|n| read(n))
        .collect();
    for f in &first {
        let text = String::from_utf8_lossy(f);
        assert_eq!(
            text.lines().next().unwrap(),
            format!("# config_sha256={hash}")
        );
    }
    assert_eq!(run(&dir, "simulate", &cfg, &[]).status.code(), Some(0));
    assert_eq!(run(&dir, "spurs", &cfg, &[]).status.code(), Some(0));
    for (name, bytes) in ["ctsd_trace.csv", "pfm_trace.csv", "spurs.csv"].iter().zip(&first) {
        assert_eq!(&read(name), bytes, "{name} changed between runs");
    }
}

#[test]
fn trace_files_compare_and_length_mismatch_is_usage() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", &first_order(512));
    assert_eq!(run(&dir, "simulate", &cfg, &[]).status.code(), Some(0));
    let ctsd = dir.path().join("out/ctsd_trace.csv");
    let pfm = dir.path().join("out/pfm_trace.csv");
    let o = pfmsd(&["compare", "--traces", ctsd.to_str().unwrap(), pfm.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("EXACT MATCH (512 samples)"));

    let text = std::fs::read_to_string(&pfm).unwrap();
    let short: String = text.lines().take(100).map(|l| format!("{l}\n")).collect();
    let cut = write_config(dir.path(), "short.csv", &short);
    let o = pfmsd(&["compare", "--traces", ctsd.to_str().unwrap(), cut.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn analysis_commands_write_their_tables() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"loop": {"order": 2, "a": [1.0, 1.0], "b": [1.0, 1.5], "quantizer": {"levels": 2}},
            "input": {"x_dc": 0.5, "tones": [{"amplitude": 0.05, "frequency": 0.01}]},
            "n": 1024, "dense_per_sample": 8,
            "sweep": {"amplitudes": [0.0, 0.05, 0.1], "osr": 8.0},
            "sidebands": {"q_max": 3}}"#,
    );
    for (cmd, file) in [
        ("sidebands", "sidebands.csv"),
        ("sweep-dr", "sweep.csv"),
        ("spectrum", "spectrum_e_al.csv"),
    ] {
        let o = run(&dir, cmd, &cfg, &[]);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        let text = std::fs::read_to_string(dir.path().join("out").join(file)).unwrap();
        assert!(text.starts_with("# config_sha256="), "{file}");
    }
    let sweep = std::fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    assert_eq!(sweep.lines().filter(|l| !l.starts_with('#')).count(), 4);
}
