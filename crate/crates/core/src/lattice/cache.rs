//! On-disk shell cache: `n<dim>_lambda<λ>.csv`, one header line
//! `# n=<dim> lambda=<λ> count=<k>` followed by k comma-separated points in
//! ascending lexicographic order.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::budget::Budget;
use crate::error::{LabError, Result};
use crate::lattice::{check_dim, enumerate_shell, Origin, PointSet, Shell};

/// Environment variable overriding the default cache directory.
pub const CACHE_ENV: &str = "SPHERE_LAB_CACHE";

pub fn default_cache_dir() -> PathBuf {
    std::env::var_os(CACHE_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("shells"))
}

pub fn shell_file_name(n: usize, lambda: u64) -> String {
    format!("n{n}_lambda{lambda}.csv")
}

pub fn shell_path(dir: &Path, n: usize, lambda: u64) -> PathBuf {
    dir.join(shell_file_name(n, lambda))
}

pub fn render_shell(shell: &Shell) -> String {
    let mut out = String::with_capacity(16 + shell.len() * shell.dim() * 4);
    writeln!(out, "# n={} lambda={} count={}", shell.dim(), shell.lambda(), shell.len()).unwrap();
    for p in shell.points().iter() {
        for (i, x) in p.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{x}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Write the shell atomically (temp file, then rename). Returns the final path.
pub fn save_shell(shell: &Shell, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let path = shell_path(dir, shell.dim(), shell.lambda());
    crate::report::write_atomic(&path, render_shell(shell).as_bytes())?;
    Ok(path)
}

pub fn load_shell(n: usize, lambda: u64, dir: &Path) -> Result<Shell> {
    check_dim(n)?;
    let path = shell_path(dir, n, lambda);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(LabError::CacheMiss(path)),
        Err(e) => return Err(LabError::io(&path, e)),
    };
    parse_shell(&text, n, lambda).map_err(|reason| LabError::FormatCorrupt { path, reason })
}

/// Load from the cache, enumerating and saving on a miss.
pub fn load_or_enumerate(n: usize, lambda: u64, dir: &Path, budget: &Budget) -> Result<Shell> {
    match load_shell(n, lambda, dir) {
        Ok(shell) => Ok(shell),
        Err(LabError::CacheMiss(_)) => {
            let shell = enumerate_shell(n, lambda, budget)?;
            save_shell(&shell, dir)?;
            Ok(shell)
        }
        Err(e) => Err(e),
    }
}

fn parse_shell(text: &str, n: usize, lambda: u64) -> std::result::Result<Shell, String> {
    let mut lines = text.split('\n');
    let header = lines.next().ok_or("empty file")?;
    let expected_prefix = format!("# n={n} lambda={lambda} count=");
    let count: usize = header
        .strip_prefix(&expected_prefix)
        .ok_or_else(|| format!("bad header {header:?}"))?
        .parse()
        .map_err(|e| format!("bad count: {e}"))?;
    let mut coords = Vec::with_capacity(count * n);
    let mut rows = 0usize;
    let mut saw_end = false;
    for line in lines {
        if line.is_empty() {
            saw_end = true;
            continue;
        }
        if saw_end {
            return Err("blank line inside data".into());
        }
        let row: Vec<i64> = line
            .split(',')
            .map(|f| f.parse::<i64>().map_err(|e| format!("row {rows}: {e}")))
            .collect::<std::result::Result<_, _>>()?;
        if row.len() != n {
            return Err(format!("row {rows} has {} coordinates", row.len()));
        }
        if row.iter().map(|x| x * x).sum::<i64>() as u64 != lambda {
            return Err(format!("row {rows} is off the sphere"));
        }
        coords.extend_from_slice(&row);
        rows += 1;
    }
    if !text.ends_with('\n') {
        return Err("missing trailing newline (truncated?)".into());
    }
    if rows != count {
        return Err(format!("header says {count} points, found {rows}"));
    }
    let set = PointSet { dim: n, coords, origin: Origin::ShellSubset };
    if !set.is_strictly_sorted() {
        return Err("points not strictly ascending".into());
    }
    Ok(Shell::from_parts(lambda, set))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let shell = enumerate_shell(4, 10, &Budget::default()).unwrap();
        let path = save_shell(&shell, dir.path()).unwrap();
        assert!(path.ends_with("n4_lambda10.csv"));
        assert_eq!(load_shell(4, 10, dir.path()).unwrap(), shell);
    }

    #[test]
    fn format_is_exact() {
        let shell = enumerate_shell(2, 1, &Budget::default()).unwrap();
        assert_eq!(render_shell(&shell), "# n=2 lambda=1 count=4\n-1,0\n0,-1\n0,1\n1,0\n");
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let shell = enumerate_shell(4, 10, &Budget::default()).unwrap();
        let path = save_shell(&shell, dir.path()).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_shell(4, 10, dir.path()), Err(LabError::FormatCorrupt { .. })));
        let lines: Vec<&str> = text.lines().collect();
        fs::write(&path, lines[..lines.len() - 1].join("\n") + "\n").unwrap();
        assert!(matches!(load_shell(4, 10, dir.path()), Err(LabError::FormatCorrupt { .. })));
    }

    #[test]
    fn missing_file_is_cache_miss() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_shell(5, 7, dir.path()), Err(LabError::CacheMiss(_))));
        let shell = load_or_enumerate(5, 7, dir.path(), &Budget::default()).unwrap();
        assert_eq!(load_shell(5, 7, dir.path()).unwrap(), shell);
    }
}
