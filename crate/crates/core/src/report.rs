//! Atomic file output shared by the cache and the experiment runner.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{LabError, Result};

/// Write `bytes` to a sibling temp file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let file_name = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{file_name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| LabError::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| LabError::io(&tmp, e))?;
        f.sync_all().map_err(|e| LabError::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| LabError::io(path, e))
}
