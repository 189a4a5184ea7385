//! End-to-end runs of the `ergoq` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ergoq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ergoq")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const MACHINE: &str = r#"
regime = "mdp"
seed = 4
beta = 0.7
steps = 5000
snapshot_every = 1000

[environment]
kind = "machine"
"#;

#[test]
fn zero_steps_gives_valid_empty_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "zero.toml", &MACHINE.replace("steps = 5000", "steps = 0"));
    let out = dir.path().join("out");
    let o = ergoq(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("trace.csv")).unwrap(), "t,s,u,c,s_next\n");
    assert_eq!(fs::read_to_string(out.join("errors.csv")).unwrap(), "t,sup_error\n");
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["steps"], 0);
    assert_eq!(summary["seed"], 4);
}

#[test]
fn invalid_config_exits_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let bad = MACHINE.replace("kind = \"machine\"", "kind = \"machine\"\nnoise_stay_zero = [0.9, 1.5]");
    let cfg = write_config(dir.path(), "bad.toml", &bad);
    let o = ergoq(&["run", "--config", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("environment.noise_stay_zero[1]"));

    let cfg = write_config(dir.path(), "unknown.toml", &MACHINE.replace("seed = 4", "seed = 4\nlearning_rate = 0.1"));
    let o = ergoq(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rate"));
}

#[test]
fn oracle_on_a_trace_with_a_missing_pair_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    fs::write(&trace, "t,s,u,c,s_next\n0,0,0,1.0,1\n1,1,0,0.5,0\n2,0,1,0.2,0\n").unwrap();
    let o = ergoq(&["oracle", "--trace", trace.to_str().unwrap(), "--beta", "0.5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("(s=1, u=1)"));
}

#[test]
fn oracle_recovers_the_run_table_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "m.toml", MACHINE);
    let out = dir.path().join("out");
    assert!(ergoq(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let q = dir.path().join("q.csv");
    let o = ergoq(&["oracle", "--trace", out.join("trace.csv").to_str().unwrap(), "--beta", "0.7", "--out", q.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&q).unwrap();
    assert!(text.starts_with("s,u,value,visits\n"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn reruns_are_byte_identical_and_seed_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "m.toml", MACHINE);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for out in [&a, &b] {
        assert!(ergoq(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    }
    assert!(ergoq(&["run", "--config", &cfg, "--out", c.to_str().unwrap(), "--seed", "5"]).status.success());
    for f in ["trace.csv", "qtable.csv", "errors.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(a.join("trace.csv")).unwrap(), fs::read(c.join("trace.csv")).unwrap());
}

#[test]
fn bounds_recomputes_the_recorded_value() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
regime = "quantized"
seed = 2
beta = 0.5
steps = 2000

[environment]
kind = "continuous"
a = 0.5
drift = [0.0, 0.45]
sigma = 0.1
target = 0.6
slope = 1.0
action_cost = [0.0, 0.1]

[perception]
kind = "quantizer"
cells = 8
"#;
    let cfg = write_config(dir.path(), "q.toml", text);
    let out = dir.path().join("out");
    assert!(ergoq(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let o = ergoq(&["bounds", "--summary", out.join("summary.json").to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["recorded"], v["recomputed"]);
    assert!((v["recorded"].as_f64().unwrap() - 2.0 * 0.125 / (0.25 * 0.75)).abs() < 1e-12);
}

#[test]
fn replicates_land_in_seed_directories() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "m.toml", MACHINE);
    let out = dir.path().join("out");
    let o = ergoq(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--replicates", "3", "--steps", "300"]);
    assert!(o.status.success());
    for seed in [4, 5, 6] {
        assert!(out.join(format!("seed_{seed}")).join("summary.json").exists());
    }
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 3);
}
