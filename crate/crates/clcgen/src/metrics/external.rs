use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use crate::error::{Error, Result};

/// Directory searched for scorer executables named `clcgen-score-<name>`.
pub const SCORER_PATH_ENV: &str = "CLCGEN_SCORER_PATH";

/// Maps metric names to external executables. Each executable is invoked as
/// `<exe> <real_dir> <gen_dir>` and must print a single number on stdout.
#[derive(Clone, Debug, Default)]
pub struct ScorerRegistry {
    scorers: BTreeMap<String, PathBuf>,
}

impl ScorerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers every `clcgen-score-*` file found in the directory named by
    /// [`SCORER_PATH_ENV`], if set.
    pub fn from_env() -> Self {
        let mut reg = Self::new();
        if let Some(dir) = std::env::var_os(SCORER_PATH_ENV) {
            reg.discover(Path::new(&dir));
        }
        reg
    }

    pub fn discover(&mut self, dir: &Path) {
        let Ok(entries) = std::fs::read_dir(dir) else {
            return;
        };
        for entry in entries.flatten() {
            let name = entry.file_name();
            let Some(name) = name.to_str() else { continue };
            if let Some(metric) = name.strip_prefix("clcgen-score-") {
                self.scorers.insert(metric.to_string(), entry.path());
            }
        }
    }

    pub fn register(&mut self, name: impl Into<String>, exe: impl Into<PathBuf>) {
        self.scorers.insert(name.into(), exe.into());
    }

    pub fn get(&self, name: &str) -> Option<&Path> {
        self.scorers.get(name).map(PathBuf::as_path)
    }
}

/// Runs the scorer registered for `name` and parses its output.
pub fn external_score(
    registry: &ScorerRegistry,
    name: &str,
    real_dir: &Path,
    gen_dir: &Path,
) -> Result<f64> {
    let exe = registry
        .get(name)
        .ok_or_else(|| Error::UnsupportedMetric(name.to_string()))?;
    let out = Command::new(exe)
        .arg(real_dir)
        .arg(gen_dir)
        .output()
        .map_err(|e| Error::io(format!("running scorer {}", exe.display()), e))?;
    if !out.status.success() {
        return Err(Error::Parse(format!(
            "scorer `{name}` exited with {}",
            out.status
        )));
    }
    let text = String::from_utf8_lossy(&out.stdout);
    let value: f64 = text
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("scorer `{name}` printed {:?}", text.trim())))?;
    if !value.is_finite() {
        return Err(Error::Parse(format!("scorer `{name}` returned {value}")));
    }
    Ok(value)
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;
    use std::os::unix::fs::PermissionsExt;

    fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, format!("#!/bin/sh\n{body}\n")).unwrap();
        std::fs::set_permissions(&p, std::fs::Permissions::from_mode(0o755)).unwrap();
        p
    }

    #[test]
    fn unregistered_metric() {
        let r = ScorerRegistry::new();
        let e = external_score(&r, "fvd", Path::new("."), Path::new(".")).unwrap_err();
        assert!(matches!(e, Error::UnsupportedMetric(n) if n == "fvd"));
    }

    #[test]
    fn echo_adapter() {
        let dir = tempfile::tempdir().unwrap();
        script(dir.path(), "clcgen-score-fvd", "echo 203.11");
        let mut r = ScorerRegistry::new();
        r.discover(dir.path());
        let v = external_score(&r, "fvd", Path::new("a"), Path::new("b")).unwrap();
        assert_eq!(v, 203.11);
    }

    #[test]
    fn malformed_output() {
        let dir = tempfile::tempdir().unwrap();
        let exe = script(dir.path(), "bad", "echo not-a-number");
        let mut r = ScorerRegistry::new();
        r.register("fvd", exe);
        let e = external_score(&r, "fvd", Path::new("a"), Path::new("b")).unwrap_err();
        assert!(matches!(e, Error::Parse(_)));
    }
}
