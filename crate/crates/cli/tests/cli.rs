//! CLI-level behavior: error reporting, subcommand composition, and
//! output reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use once_cell::sync::Lazy;

fn dtlsfp_raw(args: &[&str]) -> Output {
    let mut command = Command::new(env!("CARGO_BIN_EXE_dtlsfp"));
    for (key, _) in std::env::vars() {
        if key.starts_with("DTLSFP_") {
            command.env_remove(key);
        }
    }
    command.args(args).output().expect("binary runs")
}

fn dtlsfp(args: &[&str]) -> Output {
    let output = dtlsfp_raw(args);
    assert!(
        output.status.success(),
        "dtlsfp {:?} failed: {}",
        args,
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

struct Fixture {
    dir: tempfile::TempDir,
    manifest: PathBuf,
}

static CORPUS: Lazy<Fixture> = Lazy::new(|| {
    let dir = tempfile::tempdir().unwrap();
    let config =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/planted_identifiers.json");
    let out = dtlsfp(&[
        "synth",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("400 flows"));
    let manifest = dir.path().join("manifest.csv");
    Fixture { dir, manifest }
});

#[test]
fn missing_manifest_exits_nonzero_with_error_json() {
    let output = dtlsfp_raw(&["ingest", "--manifest", "/definitely/not/here.csv"]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    let last_line = stderr.lines().last().unwrap_or_default();
    let parsed: serde_json::Value = serde_json::from_str(last_line).expect("stderr ends in JSON");
    assert!(parsed["error"].as_str().unwrap().contains("not/here.csv"));
}

#[test]
fn unknown_transform_is_a_json_error() {
    let fixture = &*CORPUS;
    let output = dtlsfp_raw(&[
        "transform",
        "--manifest",
        fixture.manifest.to_str().unwrap(),
        "--transforms",
        "frobnicate",
    ]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    let parsed: serde_json::Value =
        serde_json::from_str(stderr.lines().last().unwrap()).expect("json error");
    assert!(parsed["error"].as_str().unwrap().contains("frobnicate"));
}

#[test]
fn extract_output_feeds_evaluate_without_reparsing() {
    let fixture = &*CORPUS;
    let features_dir = fixture.dir.path().join("features");
    dtlsfp(&[
        "extract",
        "--manifest",
        fixture.manifest.to_str().unwrap(),
        "--out",
        features_dir.to_str().unwrap(),
    ]);
    for file in ["features.csv", "schema.json", "records.jsonl"] {
        assert!(features_dir.join(file).exists(), "{file} missing");
    }

    let from_manifest = fixture.dir.path().join("eval_manifest.json");
    let from_records = fixture.dir.path().join("eval_records.json");
    let confusion_path = fixture.dir.path().join("confusion.csv");
    dtlsfp(&[
        "evaluate",
        "--manifest",
        fixture.manifest.to_str().unwrap(),
        "--no-timestamps",
        "--out",
        from_manifest.to_str().unwrap(),
        "--confusion-csv",
        confusion_path.to_str().unwrap(),
    ]);
    let confusion = std::fs::read_to_string(&confusion_path).unwrap();
    assert!(confusion.starts_with("truth,snowflake,facebook,google,discord"));
    assert_eq!(confusion.lines().count(), 5);
    dtlsfp(&[
        "evaluate",
        "--records",
        features_dir.join("records.jsonl").to_str().unwrap(),
        "--no-timestamps",
        "--out",
        from_records.to_str().unwrap(),
    ]);
    assert_eq!(
        std::fs::read(&from_manifest).unwrap(),
        std::fs::read(&from_records).unwrap(),
        "records.jsonl must reproduce the capture-parsing path byte for byte"
    );
}

#[test]
fn synth_is_reproducible_from_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let config =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/planted_identifiers.json");
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        dtlsfp(&[
            "synth",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
    }
    let bytes_a = std::fs::read(out_a.join("planted_snowflake.pcap")).unwrap();
    let bytes_b = std::fs::read(out_b.join("planted_snowflake.pcap")).unwrap();
    assert_eq!(bytes_a, bytes_b);
}

#[test]
fn default_profiles_reproduce_the_packet_count_gap() {
    // scaled-down replica: the cookie-exchange profile stays well above
    // ten packets per handshake, the chattiest plain profile well below
    // seven
    let dir = tempfile::tempdir().unwrap();
    let config =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/replica.json");
    dtlsfp(&[
        "synth",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--count",
        "40",
    ]);
    let stats_path = dir.path().join("stats.json");
    dtlsfp(&[
        "stats",
        "--manifest",
        dir.path().join("manifest.csv").to_str().unwrap(),
        "--no-timestamps",
        "--out",
        stats_path.to_str().unwrap(),
    ]);
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&stats_path).unwrap()).unwrap();
    let mean = |app: &str| stats["classes"][app]["mean_packets"].as_f64().unwrap();
    assert!(mean("snowflake") > 10.0, "snowflake {}", mean("snowflake"));
    for app in ["facebook", "google", "discord"] {
        assert!(mean(app) < 7.0, "{app} {}", mean(app));
    }
}

#[test]
fn stats_writes_flow_summaries_when_asked() {
    let fixture = &*CORPUS;
    let flows_path = fixture.dir.path().join("flows.jsonl");
    dtlsfp(&[
        "stats",
        "--manifest",
        fixture.manifest.to_str().unwrap(),
        "--flows-out",
        flows_path.to_str().unwrap(),
        "--no-timestamps",
    ]);
    let text = std::fs::read_to_string(&flows_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 400);
    let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert!(first["packet_count"].as_u64().unwrap() >= 4);
    assert!(first["messages"].as_array().unwrap().len() >= 4);
}
