use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn teachbench(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_teachbench"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = teachbench(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn sample_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let first = ok(dir.path(), &["sample", "--k", "9", "--out", "a"]);
    ok(dir.path(), &["sample", "--k", "9", "--out", "b"]);
    assert!(first.contains("grid 243"));
    let a = std::fs::read(dir.path().join("a/profiles.json")).unwrap();
    let b = std::fs::read(dir.path().join("b/profiles.json")).unwrap();
    assert_eq!(a, b);
    let profiles = read_json(&dir.path().join("a/profiles.json"));
    assert_eq!(profiles.as_array().unwrap().len(), 9);
    assert_eq!(profiles[0]["name"], "L-L-L-L-L");
}

#[test]
fn sample_accepts_level_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["sample", "--k", "3", "--seed", "2,2,2,2,2"]);
    assert!(out.contains("P1  H-H-H-H-H"), "{out}");
}

#[test]
fn autochat_runs_requested_batches() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["sample", "--k", "2"]);
    let out = ok(
        dir.path(),
        &["autochat", "--profile", "P2", "--profiles", "out/profiles.json", "--batches", "2"],
    );
    assert!(out.starts_with("12 messages"), "{out}");
    let session = read_json(&dir.path().join("out/autochat-P2.json"));
    assert_eq!(session["conversation"]["messages"].as_array().unwrap().len(), 12);
    let profile = read_json(&dir.path().join("out/profile-P2.json"));
    assert!(profile["trait_overview"]["text"].as_str().unwrap().contains("Motivation:"));
}

#[test]
fn autochat_on_starter_project_matches_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let project = fixtures().join("starter_project");
    ok(
        dir.path(),
        &["autochat", "--project", project.to_str().unwrap(), "--profile", "S1"],
    );
    let got = std::fs::read_to_string(dir.path().join("out/autochat-S1.txt")).unwrap();
    let want = std::fs::read_to_string(project.join("autochat-S1.txt")).unwrap();
    assert_eq!(got, want);
}

#[test]
fn interview_and_lesson_write_transcripts() {
    let dir = tempfile::tempdir().unwrap();
    let project = fixtures().join("starter_project");
    let p = project.to_str().unwrap();
    ok(dir.path(), &["eval", "interview", "--project", p, "--profile", "S2"]);
    ok(dir.path(), &["eval", "lesson", "--project", p, "--profile", "S2"]);
    let interview = std::fs::read_to_string(dir.path().join("out/interview-S2.txt")).unwrap();
    assert!(interview.starts_with("Interviewer: "));
    assert!(dir.path().join("out/lesson-S2.json").is_file());
}

#[test]
fn report_reproduces_reference_means() {
    let dir = tempfile::tempdir().unwrap();
    let records = fixtures().join("reference_records");
    let profiles = fixtures().join("reference_profiles.json");
    let out = ok(
        dir.path(),
        &[
            "eval",
            "report",
            "--records",
            records.to_str().unwrap(),
            "--profiles",
            profiles.to_str().unwrap(),
        ],
    );
    assert!(out.contains("| 7.0 | 5.0 |"), "{out}");
    assert!(dir.path().join("out/report.json").is_file());
    assert!(dir.path().join("out/report.md").is_file());
}

#[test]
fn trace_flag_writes_model_calls() {
    let dir = tempfile::tempdir().unwrap();
    let project = fixtures().join("starter_project");
    ok(
        dir.path(),
        &["autochat", "--project", project.to_str().unwrap(), "--profile", "S1", "--trace"],
    );
    let trace = std::fs::read_to_string(dir.path().join("out/trace.jsonl")).unwrap();
    assert!(trace.lines().count() >= 6);
    for line in trace.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tb.toml"), "out = \"artifacts\"\nbatches = 2\n").unwrap();
    ok(dir.path(), &["sample", "--k", "1", "--config", "tb.toml"]);
    let out = ok(
        dir.path(),
        &["autochat", "--config", "tb.toml", "--profile", "P1", "--profiles", "artifacts/profiles.json"],
    );
    assert!(out.starts_with("12 messages"), "{out}");
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let bad_temp = teachbench(dir.path(), &["sample", "--respond-temperature", "3"]);
    assert_eq!(bad_temp.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_temp.stderr).contains("error[config_error]"));

    let missing_provider = teachbench(dir.path(), &["sample", "--provider", "nope.json"]);
    assert_eq!(missing_provider.status.code(), Some(2));

    let unknown_profile = teachbench(dir.path(), &["autochat", "--profile", "ghost"]);
    assert_eq!(unknown_profile.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&unknown_profile.stderr).contains("error[not_found]"));

    let too_many = teachbench(dir.path(), &["sample", "--k", "244"]);
    assert_eq!(too_many.status.code(), Some(4));
}

#[test]
fn export_import_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let profiles = fixtures().join("reference_profiles.json");
    ok(
        dir.path(),
        &["init", "--id", "demo", "--profiles", profiles.to_str().unwrap(), "--store", "a"],
    );
    ok(dir.path(), &["export", "--id", "demo", "--store", "a"]);
    let out = ok(dir.path(), &["import", "out/demo.zip", "--store", "b"]);
    assert!(out.contains("imported demo"));
    let a = read_json(&dir.path().join("a/demo/project.json"));
    let b = read_json(&dir.path().join("b/demo/project.json"));
    assert_eq!(a, b);
    assert_eq!(b["profiles"].as_array().unwrap().len(), 9);

    let again = teachbench(dir.path(), &["init", "--id", "demo", "--store", "a"]);
    assert_eq!(again.status.code(), Some(4));
}

#[test]
fn provider_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.json"), "[]").unwrap();
    std::fs::write(
        dir.path().join("provider.json"),
        r#"{"kind": "scripted", "script_path": "empty.json"}"#,
    )
    .unwrap();
    ok(dir.path(), &["sample", "--k", "1"]);
    let out = teachbench(
        dir.path(),
        &["autochat", "--provider", "provider.json", "--profile", "P1", "--profiles", "out/profiles.json"],
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[provider_error]"));
}
