//! End-to-end runs of the `gestnav` binary.

use std::path::Path;
use std::process::{Command, Output};

use gestnav::gesture::dataset::read_dataset;

const TINY: &str = r#"
[scene]
max_scenes = 2
[model]
vision_hidden = 8
vision_out = 4
gesture_out = 4
embed_dim = 4
combiner = 8
hidden = 8
[ppo]
horizon = 16
num_envs = 2
buffer = 32
minibatch = 16
epochs = 1
total_env_steps = 64
log_every = 1
[eval]
episodes_per_scene = 3
"#;

fn gestnav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gestnav"))
        .args(args)
        .env_remove("GESTNAV_SEED")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_config(dir: &Path) -> String {
    let p = dir.join("tiny.toml");
    std::fs::write(&p, TINY).unwrap();
    p.display().to_string()
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = gestnav(&["fly"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn bad_config_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[ppo]\nminibatch = 7\n").unwrap();
    let out = gestnav(&["train", "--config", cfg.to_str().unwrap(), "--condition", "baseline", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_checkpoint_is_runtime_error() {
    let out = gestnav(&["eval", "--checkpoint", "/nonexistent/x.ckpt", "--episodes", "1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gen_scenes_writes_one_file_per_scene() {
    let dir = tempfile::tempdir().unwrap();
    ok(&gestnav(&["gen-scenes", "--split", "test", "--scene-type", "bathroom", "--out", dir.path().to_str().unwrap()]));
    let mut names: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 5);
    assert_eq!(names[0], "bathroom_025.json");
}

#[test]
fn gen_gestures_writes_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.bin");
    ok(&gestnav(&["gen-gestures", "--out", path.to_str().unwrap(), "--count", "6"]));
    let records = read_dataset(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(records.len(), 6);
}

#[test]
fn train_eval_replay_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let run = dir.path().join("run");
    let run_s = run.to_str().unwrap();
    ok(&gestnav(&["train", "--config", &cfg, "--condition", "intervention", "--out", run_s]));
    for f in ["final.ckpt", "metrics.jsonl", "manifest.json", "checkpoint_00000064.ckpt"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["scene_hash"].as_str().unwrap().len(), 64);

    let ev = dir.path().join("eval");
    let ckpt = run.join("final.ckpt");
    let out = gestnav(&[
        "eval", "--config", &cfg, "--checkpoint", ckpt.to_str().unwrap(), "--split", "test",
        "--budgets", "1,2,3,inf", "--out", ev.to_str().unwrap(), "--emit-csv",
    ]);
    ok(&out);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let cells = &report["all"]["intervention"];
    for b in ["1", "2", "3", "inf"] {
        assert_eq!(cells[b]["n"], 6, "budget {b}");
    }
    for f in ["report.json", "episodes.jsonl", "report.csv", "manifest.json"] {
        assert!(ev.join(f).exists(), "{f} missing");
    }
    let csv = std::fs::read_to_string(ev.join("report.csv")).unwrap();
    assert!(csv.starts_with("scene_type,method,budget,sr,spl,n\n"));

    let log = ev.join("episodes.jsonl");
    let out = gestnav(&["replay", "--config", &cfg, "--log", log.to_str().unwrap(), "--episode", "2"]);
    ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains('S') && text.contains("episode 2"));
}

#[test]
fn oracle_eval_without_checkpoint() {
    let out = gestnav(&["eval", "--method", "oracle", "--condition", "baseline", "--episodes", "4", "--budgets", "1"]);
    ok(&out);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["all"]["oracle"]["1"]["sr"], 1.0);
}

#[test]
fn seed_override_changes_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let train = |name: &str, seed: Option<&str>| {
        let out_dir = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_gestnav"));
        cmd.args(["train", "--config", &cfg, "--condition", "baseline", "--out", out_dir.to_str().unwrap()]);
        match seed {
            Some(s) => cmd.env("GESTNAV_SEED", s),
            None => cmd.env_remove("GESTNAV_SEED"),
        };
        ok(&cmd.output().unwrap());
        std::fs::read(out_dir.join("final.ckpt")).unwrap()
    };
    let a = train("a", None);
    let b = train("b", Some("0"));
    let c = train("c", Some("5"));
    assert_eq!(a, b);
    assert_ne!(a, c);
}
