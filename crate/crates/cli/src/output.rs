use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::failure::{CliResult, Failure, INTERNAL};

/// Stdout policy from the global flags.
#[derive(Clone, Copy, Debug)]
pub struct Out {
    pub json: bool,
    pub quiet: bool,
}

impl Out {
    /// JSON report under `--json`; otherwise the text summary unless `--quiet`.
    pub fn emit(&self, report: &Value, text: impl FnOnce() -> String) -> CliResult {
        if self.json {
            println!("{}", pretty(report)?);
        } else if !self.quiet {
            print!("{}", text());
        }
        Ok(())
    }
}

pub fn pretty(v: &Value) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(OsString::from).unwrap_or_default();
    name.push(".partial");
    path.with_file_name(name)
}

/// Write to `<path>.partial`, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult {
    let tmp = partial_path(path);
    fs::write(&tmp, bytes).map_err(|e| Failure::new(INTERNAL, anyhow::anyhow!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| Failure::new(INTERNAL, anyhow::anyhow!("{}: {e}", path.display())))
}

pub fn write_json(path: &Path, v: &Value) -> CliResult {
    let mut s = pretty(v)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn ensure_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| Failure::new(INTERNAL, anyhow::anyhow!("{}: {e}", dir.display())))
}

/// Scientific notation outside `[1e-3, 1e6)`, shortest round-trip digits either way.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x != 0.0 && a.is_finite() && !(1e-3..1e6).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formatting() {
        assert_eq!(num(5e-8), "5e-8");
        assert_eq!(num(0.25), "0.25");
        assert_eq!(num(0.0), "0");
        assert_eq!(num(191.94103648752323), "191.94103648752323");
        assert_eq!(num(2.5e7), "2.5e7");
    }

    #[test]
    fn partial_sibling() {
        assert_eq!(partial_path(Path::new("a/model.bin")), Path::new("a/model.bin.partial"));
    }
}
