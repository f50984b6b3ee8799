//! Black-box tests of the installed binary: exit codes, files written,
//! and output determinism, driven through `std::process::Command`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario_json(seed: u64) -> String {
    format!(
        r#"{{
  "seed": {seed},
  "archOption": "top1Direct",
  "devices": [
    {{ "id": "1-001-000000000000000000000001" }},
    {{ "id": "1-001-000000000000000000000002" }},
    {{ "id": "1-001-000000000000000000000003" }}
  ],
  "readers": [{{
    "readerId": 1, "kind": "ranReader", "areaId": 1,
    "coverage": {{ "deviceIds": [
      "1-001-000000000000000000000001",
      "1-001-000000000000000000000002",
      "1-001-000000000000000000000003"
    ] }}
  }}],
  "aiotfs": [{{ "aiotfId": 1, "serviceAreas": [1] }}],
  "afs": [{{ "afId": 1, "allowedAreas": [1], "allowedServices": ["inventory"] }}],
  "tasks": [{{ "af": 1, "service": "inventory", "targets": {{ "mask": {{}} }}, "area": 1 }}]
}}"#
    )
}

/// Invokes the binary with a scrubbed environment so ambient
/// `AIOTSIM_OUT` values never leak into tests.
fn aiotsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aiotsim"))
        .args(args)
        .current_dir(dir)
        .env_remove("AIOTSIM_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout is utf-8")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr is utf-8")
}

fn repo_scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[test]
fn run_writes_metrics_and_prints_the_table() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.json"), scenario_json(5)).unwrap();

    let out = aiotsim(dir.path(), &["run", "s.json", "--out", "results"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));

    let text = stdout(&out);
    assert!(text.contains("inventory"), "table shows the service: {text}");
    assert!(text.contains("done"), "table shows the status: {text}");
    assert!(text.contains("wrote"), "run names the files it wrote: {text}");

    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("results/metrics.json")).unwrap())
            .unwrap();
    assert_eq!(metrics["seed"], 5);
    assert_eq!(metrics["tasks"][0]["devicesReported"], 3);
    assert!(!dir.path().join("results/trace.jsonl").exists(), "no trace without --trace");
}

#[test]
fn trace_file_is_jsonl_in_time_order() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.json"), scenario_json(5)).unwrap();

    let out = aiotsim(dir.path(), &["run", "s.json", "--out", "results", "--trace"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));

    let trace = fs::read_to_string(dir.path().join("results/trace.jsonl")).unwrap();
    let mut last = 0u64;
    let mut lines = 0;
    for line in trace.lines() {
        let event: serde_json::Value = serde_json::from_str(line).expect("each line is JSON");
        let t = event["timeMicros"].as_u64().expect("events carry a timestamp");
        assert!(t >= last, "trace timestamps never go backwards");
        last = t;
        lines += 1;
    }
    assert!(lines > 5, "a run produces a real trace, got {lines} events");
}

#[test]
fn identical_runs_produce_byte_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.json"), scenario_json(42)).unwrap();

    for args in [
        ["run", "s.json", "--out", "a", "--trace"],
        ["run", "s.json", "--out", "b", "--trace"],
    ] {
        let out = aiotsim(dir.path(), &args);
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    }
    for file in ["metrics.json", "trace.jsonl"] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
}

#[test]
fn seed_flag_overrides_the_scenario_seed() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.json"), scenario_json(42)).unwrap();

    let out = aiotsim(dir.path(), &["run", "s.json", "--out", "o", "--seed", "977"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/metrics.json")).unwrap())
            .unwrap();
    assert_eq!(metrics["seed"], 977, "the report reflects the effective seed");
}

#[test]
fn out_env_var_is_honored_when_no_flag_is_given() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.json"), scenario_json(5)).unwrap();
    let out_dir = dir.path().join("from-env");

    let out = Command::new(env!("CARGO_BIN_EXE_aiotsim"))
        .args(["run", "s.json"])
        .current_dir(dir.path())
        .env("AIOTSIM_OUT", &out_dir)
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(out_dir.join("metrics.json").exists());
}

#[test]
fn the_shipped_scenarios_validate() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["smoke.json", "warehouse.json"] {
        let path = repo_scenarios().join(name);
        let out = aiotsim(dir.path(), &["validate", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{name} stderr: {}", stderr(&out));
        assert!(stdout(&out).starts_with("valid:"), "{name}: {}", stdout(&out));
    }
}

#[test]
fn validate_distinguishes_unreadable_from_invalid() {
    let dir = tempfile::tempdir().unwrap();

    let missing = aiotsim(dir.path(), &["validate", "nope.json"]);
    assert_eq!(missing.status.code(), Some(2), "unreadable file");

    fs::write(dir.path().join("garbage.json"), "{ not json").unwrap();
    let garbage = aiotsim(dir.path(), &["validate", "garbage.json"]);
    assert_eq!(garbage.status.code(), Some(1), "unparseable file");

    // Parseable but incoherent: the task names an AF nobody registered.
    let broken = scenario_json(1).replace(r#""af": 1"#, r#""af": 9"#);
    fs::write(dir.path().join("broken.json"), broken).unwrap();
    let invalid = aiotsim(dir.path(), &["validate", "broken.json"]);
    assert_eq!(invalid.status.code(), Some(1), "cross-checks failed");
    assert!(stderr(&invalid).contains("error:"));
}

#[test]
fn run_rejects_a_missing_or_invalid_scenario_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = aiotsim(dir.path(), &["run", "nope.json"]);
    assert_eq!(missing.status.code(), Some(1));

    fs::write(dir.path().join("garbage.json"), "[]").unwrap();
    let garbage = aiotsim(dir.path(), &["run", "garbage.json"]);
    assert_eq!(garbage.status.code(), Some(1));
}

#[test]
fn run_reports_unwritable_output_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.json"), scenario_json(5)).unwrap();
    // The output path runs through an existing file, so the directory
    // cannot be created.
    fs::write(dir.path().join("blocker"), "").unwrap();

    let out = aiotsim(dir.path(), &["run", "s.json", "--out", "blocker/results"]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("cannot create"));
}

#[test]
fn injected_tasks_run_after_the_scenario_and_can_fail_in_the_core() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.json"), scenario_json(5)).unwrap();
    // One well-formed injected sweep, then one from an AF the core never
    // registered: the stream parses, so the second task must reach the
    // core and fail there, as a task row rather than a CLI error.
    fs::write(
        dir.path().join("extra.jsonl"),
        concat!(
            "# injected after the scenario's own tasks\n",
            r#"{"af": 1, "service": "inventory", "targets": {"mask": {}}, "area": 1}"#,
            "\n",
            r#"{"af": 99, "service": "inventory", "targets": {"mask": {}}, "area": 1}"#,
            "\n",
        ),
    )
    .unwrap();

    let out = aiotsim(
        dir.path(),
        &["run", "s.json", "--out", "o", "--af-commands", "extra.jsonl"],
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));

    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/metrics.json")).unwrap())
            .unwrap();
    let tasks = metrics["tasks"].as_array().unwrap();
    assert_eq!(tasks.len(), 3, "scenario task plus two injected tasks");
    assert_eq!(tasks[1]["status"], "done");
    assert_eq!(tasks[2]["status"], "failed");
    assert_eq!(tasks[2]["failure"], "application function 99 is not registered");
    assert_eq!(metrics["totals"]["tasksFailed"], 1);
}

#[test]
fn a_bad_task_stream_line_fails_fast_with_its_line_number() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.json"), scenario_json(5)).unwrap();
    fs::write(
        dir.path().join("extra.jsonl"),
        concat!(
            r#"{"af": 1, "service": "inventory", "targets": {"mask": {}}, "area": 1}"#,
            "\n",
            "this is not json\n",
        ),
    )
    .unwrap();

    let out = aiotsim(
        dir.path(),
        &["run", "s.json", "--out", "o", "--af-commands", "extra.jsonl"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("extra.jsonl:2:"), "stderr: {}", stderr(&out));
    assert!(!dir.path().join("o").exists(), "no partial outputs on a rejected stream");
}

#[test]
fn summarize_renders_a_metrics_file_and_rejects_garbage() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.json"), scenario_json(5)).unwrap();
    let run = aiotsim(dir.path(), &["run", "s.json", "--out", "o"]);
    assert_eq!(run.status.code(), Some(0));

    let out = aiotsim(dir.path(), &["summarize", "o/metrics.json"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("task  taskId  service"), "header present: {text}");
    assert!(text.contains("totals:"), "totals line present: {text}");

    fs::write(dir.path().join("junk.json"), "{\"seed\": true}").unwrap();
    let junk = aiotsim(dir.path(), &["summarize", "junk.json"]);
    assert_eq!(junk.status.code(), Some(1));

    let missing = aiotsim(dir.path(), &["summarize", "nope.json"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn help_exits_zero_and_names_the_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let out = aiotsim(dir.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    for sub in ["run", "validate", "summarize"] {
        assert!(text.contains(sub), "--help mentions {sub}");
    }
}
