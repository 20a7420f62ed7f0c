use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::seed::sha256_hex;
use crate::{Error, Result};

/// Provenance record written next to every output file.
///
/// Two runs with the same inputs, seed, config and tool version produce
/// manifests that differ only in `command_line` and `created_at_unix`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command_line: String,
    pub command: String,
    pub master_seed: u64,
    pub config_hash: String,
    /// Input file name to SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    /// Output file name to SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
    pub tool_version: String,
    pub counts: BTreeMap<String, u64>,
    pub created_at_unix: u64,
}

impl RunManifest {
    pub fn new(command_line: &str, command: &str, master_seed: u64, config_hash: String) -> Self {
        RunManifest {
            command_line: command_line.to_string(),
            command: command.to_string(),
            master_seed,
            config_hash,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            tool_version: crate::VERSION.to_string(),
            counts: BTreeMap::new(),
            created_at_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        self.inputs.insert(file_name(path), sha256_hex(&bytes));
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        self.outputs.insert(file_name(path), sha256_hex(&bytes));
        Ok(())
    }

    pub fn count(&mut self, key: &str, n: u64) {
        self.counts.insert(key.to_string(), n);
    }

    /// Manifest path for an output: `<out>.manifest.json`.
    pub fn path_for(output: &Path) -> PathBuf {
        sibling(output, "manifest.json")
    }

    pub fn write(&self, output: &Path) -> Result<PathBuf> {
        let path = Self::path_for(output);
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// The fields that must match across reproducible runs.
    pub fn reproducible_view(&self) -> RunManifest {
        RunManifest {
            command_line: String::new(),
            created_at_unix: 0,
            ..self.clone()
        }
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// `<path>.<suffix>`, keeping the full original file name.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}
