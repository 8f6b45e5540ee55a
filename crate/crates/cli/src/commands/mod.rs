pub mod bench;
pub mod diagnose;
pub mod explain;
pub mod train;

use std::path::Path;

/// Path relative to the run directory when it lies inside it.
pub(crate) fn display_rel(path: &Path, dir: &Path) -> String {
    path.strip_prefix(dir).unwrap_or(path).display().to_string()
}
