use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use xai_core::i2md::content_id;
use xai_core::Error;

use crate::CliError;

pub const TOOL_NAME: &str = "xai";

/// Hex characters of the fingerprint hash used in run ids.
const RUN_ID_LEN: usize = 12;

/// Where a command writes and what configuration produced it.
#[derive(Debug, Clone)]
pub struct RunContext {
    /// Tool, version, command and the full argument set.
    pub fingerprint: Value,
    pub run_id: String,
    pub dir: PathBuf,
}

#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    run: &'a Value,
    #[serde(flatten)]
    body: &'a T,
}

impl RunContext {
    /// Fingerprints `config` and creates `out`, or `<out_root>/<command>-<run_id>`.
    pub fn create<T: Serialize>(command: &str, config: &T, out_root: &Path, out: Option<&Path>) -> Result<Self, CliError> {
        let fingerprint = json!({
            "tool": TOOL_NAME,
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config": serde_json::to_value(config).map_err(Error::from)?,
        });
        let bytes = serde_json::to_vec(&fingerprint).map_err(Error::from)?;
        let run_id = content_id(&bytes)[..RUN_ID_LEN].to_string();
        let dir = match out {
            Some(p) => p.to_path_buf(),
            None => out_root.join(format!("{command}-{run_id}")),
        };
        fs::create_dir_all(&dir).map_err(|source| Error::Io { path: dir.clone(), source })?;
        log::info!("run {run_id} writing to {}", dir.display());
        Ok(Self { fingerprint, run_id, dir })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|source| Error::Io { path: path.clone(), source })?;
        Ok(path)
    }

    /// Pretty JSON with the fingerprint under `"run"` next to the fields of `body`.
    pub fn write_json<T: Serialize>(&self, name: &str, body: &T) -> Result<PathBuf, CliError> {
        let artifact = Artifact { run: &self.fingerprint, body };
        let mut text = serde_json::to_string_pretty(&artifact).map_err(Error::from)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes CSV text with a leading `run_id` column.
    pub fn write_csv(&self, name: &str, csv: &str) -> Result<PathBuf, CliError> {
        let mut out = String::with_capacity(csv.len() + 16 * csv.lines().count());
        for (i, line) in csv.lines().enumerate() {
            if i == 0 {
                out += "run_id,";
            } else {
                out += &self.run_id;
                out.push(',');
            }
            out += line;
            out.push('\n');
        }
        self.write(name, out.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_id_depends_on_config_only() {
        let dir = tempfile::tempdir().unwrap();
        let a = RunContext::create("train", &json!({"seed": 1}), dir.path(), None).unwrap();
        let b = RunContext::create("train", &json!({"seed": 1}), dir.path(), None).unwrap();
        let c = RunContext::create("train", &json!({"seed": 2}), dir.path(), None).unwrap();
        assert_eq!(a.run_id, b.run_id);
        assert_ne!(a.run_id, c.run_id);
        assert_eq!(a.dir, dir.path().join(format!("train-{}", a.run_id)));
    }

    #[test]
    fn csv_gets_run_id_column() {
        let dir = tempfile::tempdir().unwrap();
        let ctx = RunContext::create("x", &json!({}), dir.path(), Some(&dir.path().join("o"))).unwrap();
        let path = ctx.write_csv("t.csv", "a,b\n1,2\n").unwrap();
        let text = fs::read_to_string(path).unwrap();
        assert_eq!(text, format!("run_id,a,b\n{},1,2\n", ctx.run_id));
    }
}
