//! Run manifests. Enough to replay a run and check that its outputs hash the
//! same.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::args::Common;
use crate::{CliError, CliResult};

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

pub struct Manifest {
    command: &'static str,
    argv: Vec<String>,
    config: Value,
    outputs: Map<String, Value>,
    results: Map<String, Value>,
    started: Instant,
}

impl Manifest {
    pub fn new<C: Serialize>(command: &'static str, argv: &[String], config: &C) -> Self {
        Self {
            command,
            argv: argv.to_vec(),
            config: serde_json::to_value(config).unwrap_or(Value::Null),
            outputs: Map::new(),
            results: Map::new(),
            started: Instant::now(),
        }
    }

    /// Records an output file with its SHA-256.
    pub fn output(&mut self, path: &Path) -> CliResult<()> {
        let hash = sha256_file(path)?;
        self.outputs
            .insert(path.display().to_string(), Value::String(hash));
        Ok(())
    }

    pub fn result(&mut self, key: &str, value: impl Serialize) {
        self.results.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(Value::Null),
        );
    }

    /// Writes the manifest to `--manifest`, or next to `default_base`.
    pub fn write(self, common: &Common, default_base: Option<&Path>) -> CliResult<PathBuf> {
        let path = match (&common.manifest, default_base) {
            (Some(p), _) => p.clone(),
            (None, Some(base)) => {
                let mut s = base.as_os_str().to_owned();
                s.push(".manifest.json");
                PathBuf::from(s)
            }
            (None, None) => PathBuf::from(format!("gmcs-{}.manifest.json", self.command)),
        };
        let doc = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "argv": self.argv,
            "config": self.config,
            "outputs": self.outputs,
            "results": self.results,
            "wall_s": self.started.elapsed().as_secs_f64(),
        });
        let text = serde_json::to_string_pretty(&doc)
            .map_err(|e| CliError::Data(format!("manifest: {e}")))?;
        fs::write(&path, text + "\n")
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        log::info!("manifest written to {}", path.display());
        Ok(path)
    }
}
