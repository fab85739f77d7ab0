//! Run directories: every command writes its outputs plus `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;

pub struct RunDir {
    path: PathBuf,
    outputs: Vec<String>,
}

impl RunDir {
    pub fn create(config: &RunConfig) -> Result<Self, CliError> {
        let path = config.run_dir();
        fs::create_dir_all(&path)
            .map_err(|e| CliError::Config(format!("cannot create run directory {}: {e}", path.display())))?;
        Ok(RunDir {
            path,
            outputs: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Path for an output file, recorded in the manifest.
    pub fn output(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.path.join(name)
    }

    /// Writes `manifest.json`: command, resolved config, outputs and a summary.
    pub fn finish(mut self, config: &RunConfig, summary: Value) -> Result<PathBuf, CliError> {
        self.outputs.sort();
        self.outputs.dedup();
        let manifest = json!({
            "command": config.command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config.values,
            "outputs": self.outputs,
            "summary": summary,
        });
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        fs::write(self.path.join("manifest.json"), text)?;
        Ok(self.path)
    }
}
