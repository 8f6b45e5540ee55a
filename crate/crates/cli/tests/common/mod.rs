#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn xai(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xai"))
        .env("XAI_OUT_DIR", root)
        .env_remove("RUST_LOG")
        .args(args)
        .output()
        .expect("spawn xai")
}

pub fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Value of a `key value` line of a command summary.
pub fn field(stdout: &str, key: &str) -> String {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|v| v.strip_prefix(' ')).map(|v| v.trim().to_string()))
        .unwrap_or_else(|| panic!("no {key} in {stdout}"))
}

/// Runs `train` and returns the checkpoint path and run directory.
pub fn train(root: &Path, args: &[&str]) -> (PathBuf, PathBuf) {
    let mut full = vec!["train"];
    full.extend_from_slice(args);
    let stdout = ok(&xai(root, &full));
    let ckpt = PathBuf::from(field(&stdout, "checkpoint"));
    let dir = ckpt.parent().unwrap().parent().unwrap().to_path_buf();
    (ckpt, dir)
}
