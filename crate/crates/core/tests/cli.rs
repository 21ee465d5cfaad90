use std::path::Path;
use std::process::{Command, Output};

fn codedvtr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_codedvtr")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = codedvtr(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// One point at the centre of every voxel of a 7^3 block.
fn dense_block(path: &Path) {
    let mut s = String::from("x,y,z\n");
    for i in 0..7 {
        for j in 0..7 {
            for k in 0..7 {
                let c = |v: i32| 0.1 + 0.2 * v as f64;
                s += &format!("{},{},{}\n", c(i), c(j), c(k));
            }
        }
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn single_cluster_of_a_dense_block_is_the_full_cube() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("block.csv");
    dense_block(&scene);
    let out = dir.path().to_str().unwrap();
    ok(&["patterns", "cluster", "--scenes", scene.to_str().unwrap(), "--m", "1", "--out", out]);
    let r = json(&dir.path().join("cluster.json"));
    assert_eq!(r["centroids"], serde_json::json!(["1".repeat(27)]));
    assert_eq!(r["cluster_sizes"], serde_json::json!([343]));
}

#[test]
fn training_twice_gives_identical_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let small = ["--set", "corpus.scenes=3", "--set", "train.epochs=2", "--set", "pattern_samples=500"];
    let mut bytes = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let mut args = vec!["train", "--seed", "3", "--out", out.to_str().unwrap()];
        args.extend(small);
        ok(&args);
        bytes.push((std::fs::read(out.join("model.ckpt")).unwrap(), std::fs::read(out.join("train_report.json")).unwrap()));
    }
    assert_eq!(bytes[0], bytes[1]);
    let report = json(&dir.path().join("a/train_report.json"));
    assert_eq!(report["epochs"].as_array().unwrap().len(), 2);
    assert_eq!(report["checkpoint"], "model.ckpt");
}

#[test]
fn gradcheck_passes_for_seed_seven() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gradcheck", "--seed", "7", "--count", "1", "--out", dir.path().to_str().unwrap()]);
    let r = json(&dir.path().join("gradcheck.json"));
    assert_eq!(r["passed"], true);
    assert!(r["max_rel_error"].as_f64().unwrap() < 1e-4);
}

#[test]
fn synth_generate_writes_a_readable_scene() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&["synth", "generate", "--index", "2", "--format", "csv", "--out", out]);
    let text = std::fs::read_to_string(dir.path().join("scene_002.csv")).unwrap();
    assert!(text.starts_with("x,y,z,label\n"));
    assert!(text.lines().count() > 100);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let code = |args: &[&str]| codedvtr(args).status.code();
    assert_eq!(code(&["--help"]), Some(0));
    assert_eq!(code(&["no-such-command"]), Some(1));
    assert_eq!(code(&["train", "--set", "model.no_such_key=1", "--out", out]), Some(1));
    assert_eq!(code(&["eval", "--checkpoint", "/nonexistent/model.ckpt", "--out", out]), Some(3));
    assert_eq!(code(&["gradcheck", "--count", "1", "--threshold", "1e-300", "--out", out]), Some(2));
}
