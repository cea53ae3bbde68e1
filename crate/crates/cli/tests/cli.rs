use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use tempfile::TempDir;

const TOY: &str = "attributes role, n;\n\
interface R { role = \"r\"; n = count(\"t\"); }\n\
component a { knowledge = []; process = put(<\"t\">)@(role == \"r\").nil; }\n\
component b : R { knowledge = []; process = nil; }\n";

const SELF_PUT: &str = "attributes n;\n\
interface I { n = count(\"t\"); }\n\
component c : I { knowledge = []; process = put(<\"t\">)@self.nil; }\n";

fn stocs(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stocs"))
        .current_dir(dir)
        .env_remove("STOCS_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn workspace(files: &[(&str, &str)]) -> TempDir {
    let dir = TempDir::new().unwrap();
    for (name, text) in files {
        fs::write(dir.path().join(name), text).unwrap();
    }
    dir
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn manifest(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_str(&read(dir, name)).unwrap()
}

#[test]
fn check_accepts_clean_model() {
    let w = workspace(&[("toy.stocs", TOY)]);
    let o = stocs(w.path(), &["check", "toy.stocs"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("ok"));
}

#[test]
fn exit_codes_follow_failure_class() {
    let w = workspace(&[
        ("toy.stocs", TOY),
        ("bad.stocs", "component c { knowledge = [; }"),
        ("sem.stocs", "component c { knowledge = []; process = Missing; }"),
        ("neg.json", r#"{"rates": [{"kind": "put", "rate": -1}]}"#),
        ("junk.json", "{"),
    ]);
    assert_eq!(code(&stocs(w.path(), &["check", "bad.stocs"])), 2);
    assert_eq!(code(&stocs(w.path(), &["check", "sem.stocs"])), 3);
    assert_eq!(code(&stocs(w.path(), &["check", "toy.stocs", "--config", "neg.json"])), 4);
    assert_eq!(code(&stocs(w.path(), &["check", "toy.stocs", "--config", "junk.json"])), 4);
    assert_eq!(code(&stocs(w.path(), &["states", "toy.stocs", "--max-states", "1"])), 5);
    assert_eq!(code(&stocs(w.path(), &["check", "missing.stocs"])), 1);
    assert_eq!(code(&stocs(w.path(), &["frobnicate"])), 1);
    let o = stocs(w.path(), &["check", "bad.stocs"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.stocs:1:"));
}

#[test]
fn states_lists_two_state_chain_with_manifest() {
    let w = workspace(&[("m.stocs", SELF_PUT)]);
    let o = stocs(w.path(), &["states", "m.stocs", "--out-dir", "out"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = w.path().join("out");
    assert_eq!(read(&out, "states.csv").lines().count(), 3);
    assert_eq!(read(&out, "transitions.csv").lines().count(), 2);
    let m = manifest(&out, "states.manifest.json");
    assert_eq!(m["states"], 2);
    assert_eq!(m["semantics"], "act-or");
    assert_eq!(m["model_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    assert!(m["outputs"]["states.csv"].is_string());
    assert!(m["started"].is_string() && m["finished"].is_string());
}

#[test]
fn net_or_explores_more_states() {
    let w = workspace(&[("toy.stocs", TOY)]);
    let count = |sem: &str| {
        let dir = format!("out-{sem}");
        let o = stocs(w.path(), &["states", "toy.stocs", "--semantics", sem, "--out-dir", &dir]);
        assert_eq!(code(&o), 0);
        manifest(&w.path().join(&dir), "states.manifest.json")["states"].as_u64().unwrap()
    };
    assert_eq!(count("act-or"), 2);
    assert_eq!(count("net-or"), 3);
}

fn probabilities(csv: &str) -> Vec<f64> {
    csv.lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect()
}

#[test]
fn transient_matches_closed_form() {
    let w = workspace(&[("m.stocs", SELF_PUT), ("r.json", r#"{"default_rate": 2.0}"#)]);
    let o = stocs(w.path(), &["transient", "m.stocs", "--config", "r.json", "--t", "0"]);
    assert_eq!(code(&o), 0);
    assert_eq!(probabilities(&read(w.path(), "transient.csv")), vec![1.0, 0.0]);
    let o = stocs(
        w.path(),
        &["transient", "m.stocs", "--config", "r.json", "--t", "0.5", "--tol", "1e-12", "--measure", "done=sum(n)"],
    );
    assert_eq!(code(&o), 0);
    let p = probabilities(&read(w.path(), "transient.csv"));
    let exact = 1.0 - (-1.0f64).exp();
    assert!((p[1] - exact).abs() < 1e-10, "{p:?}");
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    assert!(String::from_utf8_lossy(&o.stdout).contains("E[done]"));
    assert_eq!(code(&stocs(w.path(), &["transient", "m.stocs", "--t", "-1"])), 1);
}

fn simulate(w: &Path, dir: &str, extra: &[&str]) -> String {
    let mut args = vec![
        "simulate", "toy.stocs", "--config", "r.json", "--t-end", "4", "--grid", "8", "--replications", "64",
        "--measure", "got=sum(n)", "--out-dir", dir,
    ];
    args.extend_from_slice(extra);
    let o = stocs(w, &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    read(&w.join(dir), "summary.csv")
}

#[test]
fn simulate_is_deterministic_across_parallelism() {
    let w = workspace(&[("toy.stocs", TOY), ("r.json", r#"{"errors": [{"kind": "*", "prob": 0.1}]}"#)]);
    let a = simulate(w.path(), "a", &["--seed", "9", "--parallel", "1"]);
    let b = simulate(w.path(), "b", &["--seed", "9", "--parallel", "8"]);
    let c = simulate(w.path(), "c", &["--seed", "9", "--parallel", "8"]);
    assert_eq!(a, b);
    assert_eq!(b, c);
    let d = simulate(w.path(), "d", &["--seed", "10"]);
    assert_ne!(a, d);
    assert_eq!(manifest(&w.path().join("b"), "simulate.manifest.json")["seed"], 9);
}

#[test]
fn seed_falls_back_to_environment() {
    let w = workspace(&[("toy.stocs", TOY), ("r.json", "{}")]);
    let explicit = simulate(w.path(), "x", &["--seed", "31"]);
    let o = Command::new(env!("CARGO_BIN_EXE_stocs"))
        .current_dir(w.path())
        .env("STOCS_SEED", "31")
        .args([
            "simulate", "toy.stocs", "--config", "r.json", "--t-end", "4", "--grid", "8", "--replications", "64",
            "--measure", "got=sum(n)", "--out-dir", "env",
        ])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(read(&w.path().join("env"), "summary.csv"), explicit);
}

#[test]
fn deadlock_is_reported_in_summary() {
    let w = workspace(&[("toy.stocs", TOY), ("r.json", r#"{"default_rate": 50.0}"#)]);
    let csv = simulate(w.path(), "out", &["--traces"]);
    let header = csv.lines().next().unwrap();
    assert_eq!(header, "time,got_mean,got_sd,got_ci95,deadlocked");
    let last = csv.lines().last().unwrap();
    assert!(last.ends_with(",64"), "{last}");
    assert!(w.path().join("out/trace_63.csv").exists());
    assert_eq!(manifest(&w.path().join("out"), "simulate.manifest.json")["deadlocked"], 64);
}

#[test]
fn bikeshare_desk_scale() {
    let w = TempDir::new().unwrap();
    let start = Instant::now();
    let o = stocs(
        w.path(),
        &[
            "bikeshare", "--grid", "2x2", "--users", "10", "--bikes", "3", "--slots", "3", "--t-end", "20",
            "--replications", "4", "--parallel", "4", "--steps", "20", "--out-dir", "bs",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(start.elapsed() < Duration::from_secs(60));
    let root: PathBuf = w.path().join("bs");
    let header = |mode: &str| read(&root.join(mode), "summary.csv").lines().next().unwrap().to_string();
    assert_eq!(header("resource"), header("constant"));
    assert!(header("resource").contains("stddev_bikes_mean"));
    assert_eq!(read(&root, "regimes.csv").lines().count(), 3);
    let m = manifest(&root.join("resource"), "bikeshare.manifest.json");
    assert_eq!(m["regime"], "resource");
    // the emitted model and rates reproduce a valid model
    let check = stocs(&root.join("constant"), &["check", "model.stocs", "--config", "rates.json"]);
    assert_eq!(code(&check), 0, "{}", String::from_utf8_lossy(&check.stderr));
}

#[test]
fn bikeshare_rejects_bad_grid() {
    let w = TempDir::new().unwrap();
    assert_eq!(code(&stocs(w.path(), &["bikeshare", "--grid", "0x3"])), 1);
}
