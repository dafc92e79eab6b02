//! Self-describing output files: CSV with a `#`-prefixed JSON header line,
//! and pretty JSON documents carrying the same header.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Parameter echo shared by every file of one invocation.
#[derive(Clone, Debug)]
pub struct Header {
    pub command: &'static str,
    pub params: Value,
}

impl Header {
    pub fn new(command: &'static str, params: Value) -> Self {
        Self { command, params }
    }

    pub fn value(&self) -> Value {
        json!({
            "tool": "phasegate",
            "version": VERSION,
            "command": self.command,
            "params": self.params,
        })
    }
}

pub struct OutDir(PathBuf);

impl OutDir {
    pub fn create(path: &Path) -> Result<Self> {
        fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self(path.to_path_buf()))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    pub fn csv(&self, name: &str, header: &Header, columns: &[&str], rows: &[Vec<f64>]) -> Result<PathBuf> {
        let path = self.path(name);
        let mut buf = Vec::new();
        writeln!(buf, "# {}", header.value())?;
        writeln!(buf, "{}", columns.join(","))?;
        for row in rows {
            debug_assert_eq!(row.len(), columns.len());
            let cells: Vec<String> = row.iter().map(|x| format!("{x:.10e}")).collect();
            writeln!(buf, "{}", cells.join(","))?;
        }
        fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn json<T: Serialize>(&self, name: &str, header: &Header, body: &T) -> Result<PathBuf> {
        let path = self.path(name);
        let doc = json!({ "header": header.value(), "result": body });
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
