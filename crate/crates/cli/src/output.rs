//! Output files shared by all modes.

use std::fmt::Write as _;
use std::path::Path;
use std::process::Command;

use sparse_ppf::io::{CsvWriter, SCHEMA_VERSION};

use crate::config::Mode;
use crate::CliError;

/// Collects the names of the files written by one run.
#[derive(Debug, Default)]
pub struct Files {
    pub names: Vec<String>,
}

impl Files {
    pub fn csv(&mut self, dir: &Path, name: &str, schema: &str, columns: &[&str]) -> Result<CsvWriter, CliError> {
        self.names.push(name.to_string());
        Ok(CsvWriter::create(&dir.join(name), schema, columns)?)
    }

    pub fn text(&mut self, dir: &Path, name: &str, body: &str) -> Result<(), CliError> {
        self.names.push(name.to_string());
        std::fs::write(dir.join(name), body).map_err(|e| CliError::Output(format!("cannot write {name}: {e}")))
    }
}

pub struct Manifest<'a> {
    pub mode: Mode,
    pub seed: u64,
    pub config: Option<&'a Path>,
    pub threads: usize,
    pub wall_seconds: f64,
    /// Fully resolved configuration as TOML.
    pub resolved: &'a str,
    pub files: &'a [String],
}

fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

pub fn write_manifest(dir: &Path, m: &Manifest) -> Result<(), CliError> {
    let mut s = String::new();
    let _ = writeln!(s, "schema=manifest/{SCHEMA_VERSION}");
    let _ = writeln!(s, "mode={}", m.mode.label());
    let _ = writeln!(s, "seed={}", m.seed);
    let _ = writeln!(
        s,
        "config={}",
        m.config.map(|p| p.display().to_string()).unwrap_or_else(|| "(defaults)".into())
    );
    let _ = writeln!(s, "version={}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "git_describe={}", git_describe());
    let _ = writeln!(s, "threads={}", m.threads);
    let _ = writeln!(s, "wall_seconds={:.3}", m.wall_seconds);
    for f in m.files {
        let _ = writeln!(s, "file={f}");
    }
    let _ = writeln!(s, "[resolved]");
    s.push_str(m.resolved);
    std::fs::write(dir.join("manifest.txt"), s).map_err(|e| CliError::Output(format!("cannot write manifest: {e}")))
}

pub fn to_toml<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    toml::to_string(value).map_err(|e| CliError::Output(format!("cannot serialize configuration: {e}")))
}
