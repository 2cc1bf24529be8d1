use std::fs::{self, File};
use std::path::Path;
use std::process::{Command, Output};

use rpg::harness::curve::read_raw_csv;
use rpg::harness::LearningCurve;

fn rpg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rpg")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn usage_errors_exit_one() {
    let out = rpg(&["train", "--task", "bogus"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--task"), "{}", stderr(&out));

    assert_eq!(code(&rpg(&["train", "--no-such-flag"])), 1);
    assert_eq!(code(&rpg(&[])), 1);
    assert_eq!(code(&rpg(&["train", "--method", "M9"])), 1);
    assert_eq!(code(&rpg(&["train", "--task", "lander", "--paper-protocol"])), 1);
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&rpg(&["--help"])), 0);
    assert_eq!(code(&rpg(&["train", "--help"])), 0);
    assert_eq!(code(&rpg(&["--version"])), 0);
}

#[test]
fn bad_config_files_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "runs = 2\nnot_a_key = 1\n").unwrap();
    let out = rpg(&["train", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("not_a_key"), "{}", stderr(&out));

    let missing = dir.path().join("absent.toml");
    assert_eq!(code(&rpg(&["train", "--config", missing.to_str().unwrap()])), 1);
}

fn train_small(out: &Path, task: &str, method: &str) {
    let dir = out.to_str().unwrap();
    let res = rpg(&[
        "train", "--task", task, "--method", method, "--runs", "2", "--episodes", "20", "--eval-interval", "10",
        "--eval-episodes", "5", "--seed", "3", "--out", dir,
    ]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
}

#[test]
fn train_eval_and_curves_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    train_small(dir.path(), "dialog", "M2");
    let raw = dir.path().join("dialog_M2_raw.csv");
    let curve_path = dir.path().join("dialog_M2_curve.csv");
    for f in [&raw, &curve_path, &dir.path().join("dialog_M2_run0.ckpt"), &dir.path().join("dialog_M2_run1.ckpt")] {
        assert!(f.exists(), "{} missing", f.display());
    }

    let written = LearningCurve::read_csv(File::open(&curve_path).unwrap()).unwrap();
    let episodes: Vec<usize> = written.points.iter().map(|p| p.episodes).collect();
    assert_eq!(episodes, vec![0, 10, 20]);
    assert!(written.points.iter().all(|p| p.n_runs == 2));

    let merged = dir.path().join("merged.csv");
    let res = rpg(&["curves", raw.to_str().unwrap(), "--out", merged.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert_eq!(LearningCurve::read_csv(File::open(&merged).unwrap()).unwrap(), written);
    assert_eq!(read_raw_csv(File::open(&raw).unwrap()).unwrap().len(), 6);

    let ckpt = dir.path().join("dialog_M2_run0.ckpt");
    let res = rpg(&["eval", "--task", "dialog", "--checkpoint", ckpt.to_str().unwrap(), "--eval-episodes", "20"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert!(String::from_utf8_lossy(&res.stdout).contains("over 20 episodes"));

    let res = rpg(&["eval", "--task", "lander", "--checkpoint", ckpt.to_str().unwrap()]);
    assert_eq!(code(&res), 1, "{}", stderr(&res));
}

#[test]
fn training_is_reproducible_from_the_command_line() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    train_small(a.path(), "lander", "M3");
    train_small(b.path(), "lander", "M3");
    for name in ["lander_M3_raw.csv", "lander_M3_run1.ckpt"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn corrupt_checkpoint_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("bad.ckpt");
    fs::write(&ckpt, "RPG-CKPT v1\nnonsense\n").unwrap();
    let res = rpg(&["eval", "--checkpoint", ckpt.to_str().unwrap()]);
    assert_eq!(code(&res), 2, "{}", stderr(&res));
}
