use std::path::Path;
use std::process::{Command, Output};

fn goalstack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_goalstack")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = goalstack(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, suite: &Path) -> String {
    let path = dir.join("exp.toml");
    std::fs::write(
        &path,
        format!(
            "seed = 3\nepisodes_per_instance = 4\n\n[suite]\nfamily = \"file\"\npath = {:?}\n\n[executor]\ncheck_interval = 2\nmax_depth = 4\n\n[policy]\ncompetence_radius = 3\nslip_probability = 0.05\n",
            suite.to_string_lossy()
        ),
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn generate_run_report_replay() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("bw.toml");
    let s = suite.to_str().unwrap();
    ok(&["generate-suite", "--family", "blockwords", "--word-length", "3", "--count", "3", "--seed", "5", "--out", s]);
    let first = std::fs::read_to_string(&suite).unwrap();
    assert_eq!(first.matches("[[instance]]").count(), 3);
    // Same seed, same file.
    assert_eq!(ok(&["generate-suite", "--family", "blockwords", "--word-length", "3", "--count", "3", "--seed", "5"]), first);

    let config = write_config(dir.path(), &suite);
    let json = dir.path().join("report.json");
    let trace = dir.path().join("trace.jsonl");
    let table = ok(&["run", "--config", &config, "--json", json.to_str().unwrap(), "--trace", trace.to_str().unwrap()]);
    assert!(table.contains("run"));

    let reports: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(reports[0]["episodes"], 12);
    let csv = ok(&["report", "--input", json.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(csv.lines().count(), 2);
    assert_eq!(ok(&["report", "--input", json.to_str().unwrap()]), table);

    let replay = ok(&["replay-trace", "--config", &config, "--trace", trace.to_str().unwrap()]);
    assert!(replay.contains("episodes 12  invariant violations 0"), "{replay}");
    let rate = reports[0]["success_rate"].as_f64().unwrap();
    assert!(replay.contains(&format!("{rate:.4}")), "{replay}");
}

#[test]
fn replay_rejects_a_tampered_trace() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("chain.toml");
    ok(&["generate-suite", "--family", "chain", "--count", "2", "--length", "12", "--seed", "1", "--out", suite.to_str().unwrap()]);
    let config = write_config(dir.path(), &suite);
    let trace = dir.path().join("trace.jsonl");
    ok(&["run", "--config", &config, "--trace", trace.to_str().unwrap(), "--sequential"]);
    let text = std::fs::read_to_string(&trace).unwrap();
    // Renumber every step so the act counter no longer matches.
    let tampered = text.replace("\"step\":1,", "\"step\":7,");
    assert_ne!(tampered, text);
    std::fs::write(&trace, tampered).unwrap();
    let out = goalstack(&["replay-trace", "--config", &config, "--trace", trace.to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn ablate_lists_every_variant() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("bw.toml");
    ok(&["generate-suite", "--family", "blockwords", "--word-length", "3", "--count", "2", "--out", suite.to_str().unwrap()]);
    let config = write_config(dir.path(), &suite);
    let csv = dir.path().join("ablate.csv");
    ok(&["ablate", "--config", &config, "--episodes", "2", "--csv", csv.to_str().unwrap()]);
    let text = std::fs::read_to_string(&csv).unwrap();
    for name in ["full", "no_target_state", "no_descriptor", "no_recursive", "flat"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("{name},"))), "{name} missing from\n{text}");
    }
}

#[test]
fn datasetgen_writes_every_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("rr.toml");
    ok(&["generate-suite", "--family", "rearrange", "--objects", "2", "--plates", "3", "--count", "2", "--out", suite.to_str().unwrap()]);
    let out = dir.path().join("data");
    let summary = ok(&["datasetgen", "--suite", suite.to_str().unwrap(), "--out", out.to_str().unwrap(), "--samples-per-subgoal", "2"]);
    for name in ["anticipation", "value", "policy", "dynamics", "inverse"] {
        assert!(out.join(format!("{name}.jsonl")).exists());
        assert!(summary.contains(name));
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["environment"], "rearrange");
}

#[test]
fn bad_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("c.toml");
    ok(&["generate-suite", "--family", "chain", "--count", "1", "--out", suite.to_str().unwrap()]);
    let config = write_config(dir.path(), &suite);
    assert!(!goalstack(&["run", "--config", &config, "--check-interval", "0"]).status.success());
    assert!(!goalstack(&["run", "--config", &config, "--no-recursive", "--anticipator", "two-stage"]).status.success());
    assert!(!goalstack(&["generate-suite", "--family", "blockwords", "--word-length", "9"]).status.success());
}
