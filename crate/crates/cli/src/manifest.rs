//! Run manifests: one JSON file per artifact-producing subcommand,
//! recording enough (config, seed, version) to re-run it identically.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: String,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
    /// Command-specific extras, e.g. per-band heatmap min-max scales.
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
}

pub struct ManifestBuilder {
    command: String,
    seed: u64,
    started_at: DateTime<Utc>,
    config: serde_json::Value,
    outputs: Vec<String>,
    extra: serde_json::Value,
}

impl ManifestBuilder {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            seed,
            started_at: Utc::now(),
            config,
            outputs: Vec::new(),
            extra: serde_json::Value::Null,
        }
    }

    pub fn add_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn set_extra(&mut self, extra: serde_json::Value) {
        self.extra = extra;
    }

    /// Write `manifest.json` into `dir` and register it as an output too.
    pub fn write(self, dir: &Path) -> std::io::Result<()> {
        let path = dir.join("manifest.json");
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            started_at: self.started_at.to_rfc3339_opts(SecondsFormat::Millis, true),
            finished_at: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            config: self.config,
            outputs: self.outputs,
            extra: self.extra,
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        File::create(path)?.write_all(json.as_bytes())
    }
}
