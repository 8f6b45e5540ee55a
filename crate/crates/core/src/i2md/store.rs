use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use crate::error::{Error, Result};

pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IndexEntry {
    pub step: u64,
    pub id: String,
}

/// Content-addressed checkpoint files `<id>.ckpt` under a root directory,
/// plus an index of `(step, id)` pairs.
///
/// Files are written to a temporary name and renamed into place, so readers
/// never observe partial files. One writer at a time.
#[derive(Debug, Clone)]
pub struct CheckpointStore {
    root: PathBuf,
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

impl CheckpointStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_of(&self, id: &str) -> PathBuf {
        self.root.join(format!("{id}.ckpt"))
    }

    /// Persists the checkpoint; saving identical content again is a no-op.
    pub fn save(&self, checkpoint: &Checkpoint) -> Result<PathBuf> {
        let bytes = checkpoint.to_bytes()?;
        let path = self.path_of(&checkpoint.checkpoint_id);
        if !path.exists() {
            write_atomic(&path, &bytes)?;
        }
        let mut index = self.index()?;
        let entry = IndexEntry {
            step: checkpoint.step,
            id: checkpoint.checkpoint_id.clone(),
        };
        if !index.contains(&entry) {
            index.push(entry);
            index.sort();
            write_atomic(&self.root.join(INDEX_FILE), serde_json::to_string_pretty(&index)?.as_bytes())?;
        }
        Ok(path)
    }

    pub fn load(&self, id: &str) -> Result<Checkpoint> {
        load_checkpoint(&self.path_of(id))
    }

    /// Entries sorted by step, then id.
    pub fn index(&self) -> Result<Vec<IndexEntry>> {
        let path = self.root.join(INDEX_FILE);
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

/// Reads a checkpoint file and checks that its name, if content-addressed,
/// matches its hash.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ckpt = Checkpoint::from_bytes(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
        if stem.len() == 64 && stem.chars().all(|c| c.is_ascii_hexdigit()) && stem != ckpt.checkpoint_id {
            return Err(Error::Format(format!(
                "{}: content hash {} does not match file name",
                path.display(),
                ckpt.checkpoint_id
            )));
        }
    }
    Ok(ckpt)
}
