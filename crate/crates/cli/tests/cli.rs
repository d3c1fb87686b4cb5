use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn horolab(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_horolab"));
    cmd.args(args).env_remove("HOROLAB_OUT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn horolab")
}

fn run_dir(out: &Output) -> PathBuf {
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout.lines().find_map(|l| l.strip_prefix("run: ")).expect("run directory line");
    PathBuf::from(line)
}

fn read(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn lemma_la_run_writes_record_table_and_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let out = horolab(&["run", "lemma-la", "--t-steps", "5", "--out", tmp.path().to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = run_dir(&out);
    assert!(dir.starts_with(tmp.path().join("lemma-la")));
    let record = read(&dir.join("record.json"));
    assert_eq!(record["status"], "pass");
    assert_eq!(record["config"]["params"]["t-steps"], 5);
    assert_eq!(record["verdicts"][0]["id"], "lemma-la.slope-bound");
    assert!(record["finished"].as_str().unwrap().ends_with('Z'));
    let svg = fs::read_to_string(dir.join("plot.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
    let csv = fs::read_to_string(dir.join("integral.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn identical_configs_give_identical_results() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tmp.path().to_str().unwrap();
    let a = run_dir(&horolab(&["run", "remez", "--count=5", "--seed", "7", "--out", o], &[]));
    let b = run_dir(&horolab(&["run", "remez", "--count=5", "--seed", "7", "--out", o], &[]));
    assert_ne!(a, b, "runs are append-only");
    assert_eq!(fs::read(a.join("results.json")).unwrap(), fs::read(b.join("results.json")).unwrap());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = horolab(&["run", "lemma-la", "--bogus", "1", "--out", tmp.path().to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--bogus"));
    assert!(fs::read_dir(tmp.path()).unwrap().next().is_none(), "nothing is written on usage errors");
}

#[test]
fn unknown_experiment_and_bad_value_are_usage_errors() {
    assert_eq!(horolab(&["run", "nope"], &[]).status.code(), Some(2));
    assert_eq!(horolab(&["run", "lemma-la", "--delta", "abc"], &[]).status.code(), Some(2));
    assert_eq!(horolab(&["bianchi", "teleport"], &[]).status.code(), Some(2));
}

#[test]
fn config_file_unknown_key_names_its_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "experiment = \"lemma-la\"\n[params]\nwidth = 3\n").unwrap();
    let out = horolab(&["run", "--config", cfg.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("params.width"));

    fs::write(&cfg, "experiment = \"lemma-la\"\ncolour = 1\n").unwrap();
    assert_eq!(horolab(&["run", "--config", cfg.to_str().unwrap()], &[]).status.code(), Some(2));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    let file_out = tmp.path().join("from-file");
    let flag_out = tmp.path().join("from-flag");
    fs::write(
        &cfg,
        format!("experiment = \"lemma-la\"\nseed = 3\noutput_dir = {:?}\n[params]\nt-steps = 6\ndelta = 0.8\n", file_out),
    )
    .unwrap();
    let out = horolab(&["run", "--config", cfg.to_str().unwrap(), "--delta", "0.7"], &[]);
    assert_eq!(out.status.code(), Some(0));
    let dir = run_dir(&out);
    assert!(dir.starts_with(&file_out));
    let rec = read(&dir.join("record.json"));
    assert_eq!(rec["config"]["seed"], 3);
    assert_eq!(rec["config"]["params"]["t-steps"], 6);
    assert_eq!(rec["config"]["params"]["delta"], 0.7);

    let out = horolab(&["run", "--config", cfg.to_str().unwrap(), "--out", flag_out.to_str().unwrap()], &[]);
    assert!(run_dir(&out).starts_with(&flag_out));
}

#[test]
fn horolab_out_is_honoured() {
    let tmp = tempfile::tempdir().unwrap();
    let env_out = tmp.path().join("env");
    let out = horolab(&["run", "bianchi-reduce"], &[("HOROLAB_OUT", &env_out)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(run_dir(&out).starts_with(env_out.join("bianchi-reduce")));

    let flag_out = tmp.path().join("flag");
    let out = horolab(&["run", "bianchi-reduce", "--out", flag_out.to_str().unwrap()], &[("HOROLAB_OUT", &env_out)]);
    assert!(run_dir(&out).starts_with(&flag_out));
}

#[test]
fn module_error_is_recorded_with_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = horolab(&["run", "lemma-la", "--n", "2", "--out", tmp.path().to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(3));
    let rec = read(&run_dir(&out).join("record.json"));
    assert_eq!(rec["status"], "error");
    assert!(rec["error"].as_str().unwrap().contains("at least 3"));
}

#[test]
fn bianchi_verb_prints_results() {
    let tmp = tempfile::tempdir().unwrap();
    let out = horolab(
        &["bianchi", "reduce", "--z-re", "5.3", "--z-im", "0.2", "--t", "0.1", "--out", tmp.path().to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("\"height\"") && stdout.contains("PASS bianchi.reduced-in-domain"));
    let res = read(&run_dir(&out).join("results.json"));
    let p = &res["results"]["point"];
    let (x, y) = (p["z"][0].as_f64().unwrap(), p["z"][1].as_f64().unwrap());
    assert!(x.abs() <= 0.5 + 1e-9 && (0.0..=0.5 + 1e-9).contains(&y));
    assert!(x * x + y * y + p["t"].as_f64().unwrap().powi(2) >= 1.0 - 1e-9);
}

fn golden_for(dir: &Path, tmp: &Path, tol: &str) -> PathBuf {
    let g = tmp.join("golden.json");
    let out = horolab(&["compare", dir.to_str().unwrap(), g.to_str().unwrap(), "--bless", "--tol", tol], &[]);
    assert_eq!(out.status.code(), Some(0));
    g
}

#[test]
fn compare_reports_value_and_structural_drift() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = run_dir(&horolab(&["run", "bianchi-reduce", "--out", tmp.path().to_str().unwrap()], &[]));
    let g = golden_for(&dir, tmp.path(), "0.05");
    let golden = read(&g);
    assert_eq!(golden["schema"], "horolab-golden/1");

    let same = horolab(&["compare", dir.to_str().unwrap(), g.to_str().unwrap()], &[]);
    assert_eq!(same.status.code(), Some(0));
    assert_eq!(serde_json::from_slice::<Value>(&same.stdout).unwrap(), json!([]));

    let mut edited = golden.clone();
    let h = edited["fields"]["results.height"]["value"].as_f64().unwrap();
    edited["fields"]["results.height"]["value"] = json!(h * 1.2);
    edited["fields"]["results.no_such_field"] = json!({"value": 1.0, "tol": 0.0});
    edited["fields"]["results.word_length"]["value"] = json!("three");
    fs::write(&g, serde_json::to_string(&edited).unwrap()).unwrap();
    let out = horolab(&["compare", dir.to_str().unwrap(), g.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));
    let drifts: Value = serde_json::from_slice(&out.stdout).unwrap();
    let kinds: Vec<(&str, &str)> =
        drifts.as_array().unwrap().iter().map(|d| (d["path"].as_str().unwrap(), d["kind"].as_str().unwrap())).collect();
    assert_eq!(
        kinds,
        [("results.height", "value"), ("results.no_such_field", "missing"), ("results.word_length", "type")]
    );
}

#[test]
fn baseline_drift_fails_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tmp.path().to_str().unwrap();
    let dir = run_dir(&horolab(&["run", "bianchi-reduce", "--out", o], &[]));
    let g = golden_for(&dir, tmp.path(), "1e-9");
    let g = g.to_str().unwrap();
    assert_eq!(horolab(&["run", "bianchi-reduce", "--out", o, "--baseline", g], &[]).status.code(), Some(0));
    let moved = horolab(&["run", "bianchi-reduce", "--z-re", "2.1", "--out", o, "--baseline", g], &[]);
    assert_eq!(moved.status.code(), Some(1));
    assert!(!read(&run_dir(&moved).join("drift.json")).as_array().unwrap().is_empty());
}

#[test]
fn incompatible_baseline_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let g = tmp.path().join("old.json");
    fs::write(&g, r#"{"schema": "horolab-golden/0", "fields": {}}"#).unwrap();
    let out = horolab(&["run", "bianchi-reduce", "--baseline", g.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("incompatible baseline"));
}

#[test]
fn plot_rerenders_a_stored_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = run_dir(&horolab(&["run", "lemma-la", "--t-steps", "5", "--out", tmp.path().to_str().unwrap()], &[]));
    let target = tmp.path().join("again.svg");
    let out = horolab(&["plot", dir.to_str().unwrap(), "--out", target.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read(&target).unwrap(), fs::read(dir.join("plot.svg")).unwrap());
}

#[test]
fn list_shows_experiments_and_runs() {
    let tmp = tempfile::tempdir().unwrap();
    horolab(&["run", "bianchi-reduce", "--out", tmp.path().to_str().unwrap()], &[]);
    let out = horolab(&["list", "--runs", tmp.path().to_str().unwrap()], &[]);
    let text = String::from_utf8_lossy(&out.stdout);
    for e in ["lemma-la", "equidist", "bianchi-nondiv", "--per-height"] {
        assert!(text.contains(e), "{e} missing from list");
    }
    assert!(text.contains("pass ") && text.contains("bianchi-reduce"));
}
