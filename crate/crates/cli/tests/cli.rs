use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_ispforge");

const TINY: &str = r#"schema_version = 1
seed = 3

[data]
count = 6
width = 16
height = 16

[agent.registry]
preset = "brightness"

[agent.config]
hidden = 16
batch_size = 8

[agent.train]
steps = 60
warmup = 20
log_every = 20

[agent.env]
max_steps = 2

[agent.env.start]
mode = "given"
"#;

fn ispforge(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--config")
        .arg(dir.join("c.toml"))
        .env("ISPFORGE_LOG", "error")
        .output()
        .unwrap()
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), config).unwrap();
    dir
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().last().unwrap();
    serde_json::from_str(line).unwrap()
}

#[test]
fn unknown_config_field_is_exit_2() {
    let dir = setup("schema_version = 1\nbogus = 1\n");
    let o = ispforge(dir.path(), &["gen-data"]);
    assert_eq!(code(&o), 2);
    assert_eq!(stderr_json(&o)["error"], "invalid-config");
}

#[test]
fn missing_config_file_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&ispforge(dir.path(), &["eval"])), 2);
}

#[test]
fn bad_log_level_is_exit_2() {
    let dir = setup(TINY);
    let o = Command::new(BIN)
        .args(["gen-data", "--config"])
        .arg(dir.path().join("c.toml"))
        .env("ISPFORGE_LOG", "chatty")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn zero_threads_is_exit_2() {
    let dir = setup(TINY);
    assert_eq!(code(&ispforge(dir.path(), &["gen-data", "--threads", "0"])), 2);
}

#[test]
fn missing_and_corrupt_checkpoints_are_exit_3() {
    let dir = setup(TINY);
    assert!(ispforge(dir.path(), &["gen-data"]).status.success());
    let o = ispforge(dir.path(), &["run"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));

    std::fs::create_dir_all(dir.path().join("agent")).unwrap();
    std::fs::write(dir.path().join("agent/agent.nnck"), b"not a checkpoint").unwrap();
    assert_eq!(code(&ispforge(dir.path(), &["eval"])), 3);
}

#[test]
fn registry_change_is_exit_4() {
    let dir = setup(TINY);
    assert!(ispforge(dir.path(), &["gen-data"]).status.success());
    let o = ispforge(dir.path(), &["train-agent"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(ispforge(dir.path(), &["run"]).status.success());

    std::fs::write(dir.path().join("c.toml"), TINY.replace("\"brightness\"", "\"traditional\"")).unwrap();
    let o = ispforge(dir.path(), &["run"]);
    assert_eq!(code(&o), 4);
    assert_eq!(stderr_json(&o)["error"], "registry-mismatch");
}

#[test]
fn gen_data_is_deterministic() {
    let dir = setup(TINY);
    let d = dir.path();
    assert!(ispforge(d, &["gen-data", "--out", d.join("a").to_str().unwrap()]).status.success());
    assert!(ispforge(d, &["gen-data", "--out", d.join("b").to_str().unwrap()]).status.success());
    let a = std::fs::read(d.join("a/manifest.json")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b/manifest.json")).unwrap());
    let m: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert!(m.to_string().contains("scene_0005"));
}

#[test]
fn seed_override_changes_training() {
    let dir = setup(TINY);
    let d = dir.path();
    assert!(ispforge(d, &["gen-data"]).status.success());
    assert!(ispforge(d, &["train-agent", "--out", d.join("s3").to_str().unwrap()]).status.success());
    let o = ispforge(d, &["train-agent", "--seed", "4", "--out", d.join("s4").to_str().unwrap()]);
    assert!(o.status.success());
    let a = std::fs::read(d.join("s3/agent.nnck")).unwrap();
    let b = std::fs::read(d.join("s4/agent.nnck")).unwrap();
    assert_ne!(a, b);
    let eff: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("s4/effective_config.json")).unwrap()).unwrap();
    assert_eq!(eff["seed"], 4);
}
