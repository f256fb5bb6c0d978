use std::fs;
use std::path::Path;

use anyhow::Result;
use serde::{Deserialize, Serialize};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

/// Provenance record written next to every run's artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the canonical (sorted-key) JSON of the effective config.
    pub config_hash: String,
    pub code_version: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub status: RunStatus,
    pub error: Option<String>,
    pub threads: Option<usize>,
    /// Files in the run directory, relative and sorted.
    pub outputs: Vec<String>,
}

pub fn now() -> String {
    OffsetDateTime::now_utc()
        .format(&Rfc3339)
        .unwrap_or_else(|_| "unknown".into())
}

impl RunManifest {
    pub fn start(command: &str, config_hash: String, threads: Option<usize>) -> Self {
        Self {
            command: command.to_string(),
            config_hash,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: now(),
            finished_at: None,
            status: RunStatus::Running,
            error: None,
            threads,
            outputs: Vec::new(),
        }
    }

    pub fn finish(&mut self, dir: &Path, error: Option<String>) -> Result<()> {
        self.finished_at = Some(now());
        self.status = if error.is_some() {
            RunStatus::Failed
        } else {
            RunStatus::Completed
        };
        self.error = error;
        self.outputs = list_files(dir)?
            .into_iter()
            .filter(|p| p != MANIFEST_FILE)
            .collect();
        self.write(dir)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }

    #[cfg(test)]
    pub fn read(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?)
    }
}

/// Relative paths of all files under `dir`, sorted, with `/` separators.
pub fn list_files(dir: &Path) -> Result<Vec<String>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> std::io::Result<()> {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else if let Ok(rel) = path.strip_prefix(root) {
                let parts: Vec<String> = rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy().into_owned())
                    .collect();
                out.push(parts.join("/"));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}
