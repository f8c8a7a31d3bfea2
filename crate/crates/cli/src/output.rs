//! Output directories, artifact filtering by `--format`, and the run
//! manifest written next to every set of results.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use svlens_core::tensorstore::{encode_checkpoint, TensorMap};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Default)]
pub enum Format {
    Csv,
    Json,
    Svg,
    #[default]
    All,
}

/// Artifact class; data files (checkpoints, token streams) are always written.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Artifact {
    Csv,
    Json,
    Svg,
    Data,
}

impl Format {
    pub fn wants(self, a: Artifact) -> bool {
        matches!(
            (self, a),
            (_, Artifact::Data)
                | (Format::All, _)
                | (Format::Csv, Artifact::Csv)
                | (Format::Json, Artifact::Json)
                | (Format::Svg, Artifact::Svg)
        )
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit: String,
    pub toolkit_version: String,
    pub command_line: Vec<String>,
    pub config: Value,
    pub config_digest: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// `complete`, or `partial` when a step failed after some artifacts
    /// were written.
    pub status: String,
    pub error: Option<Value>,
    pub timestamp_unix: u64,
}

impl RunManifest {
    /// The manifest with the timestamp cleared, for rerun comparisons.
    pub fn without_timestamp(&self) -> Self {
        Self {
            timestamp_unix: 0,
            ..self.clone()
        }
    }
}

pub struct OutputDir {
    root: PathBuf,
    format: Format,
    written: BTreeMap<String, String>,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>, format: Format) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        Ok(Self {
            root,
            format,
            written: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn format(&self) -> Format {
        self.format
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&mut self, kind: Artifact, rel: &str, bytes: &[u8]) -> Result<()> {
        if !self.format.wants(kind) {
            return Ok(());
        }
        if kind == Artifact::Csv {
            debug_assert!(bytes.starts_with(b"# schema: "), "{rel} lacks a schema line");
        }
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.written.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn csv(&mut self, rel: &str, text: &str) -> Result<()> {
        self.write(Artifact::Csv, rel, text.as_bytes())
    }

    pub fn json(&mut self, rel: &str, value: &Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(Artifact::Json, rel, text.as_bytes())
    }

    pub fn svg(&mut self, rel: &str, text: &str) -> Result<()> {
        self.write(Artifact::Svg, rel, text.as_bytes())
    }

    pub fn checkpoint(&mut self, rel: &str, map: &TensorMap) -> Result<()> {
        self.write(Artifact::Data, rel, &encode_checkpoint(map)?)
    }

    pub fn data(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        self.write(Artifact::Data, rel, bytes)
    }

    pub fn outputs(&self) -> Vec<FileDigest> {
        self.written
            .iter()
            .map(|(p, d)| FileDigest {
                path: p.clone(),
                sha256: d.clone(),
            })
            .collect()
    }
}

/// Everything a command records about its run besides the artifacts.
#[derive(Debug, Default)]
pub struct RunLog {
    pub command_line: Vec<String>,
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
}

impl RunLog {
    pub fn input(&mut self, path: &Path) -> Result<()> {
        let sha256 = file_digest(path)?;
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    pub fn manifest(&self, out: &OutputDir, error: Option<&CliError>) -> RunManifest {
        let config_text = serde_json::to_string(&self.config).unwrap_or_default();
        RunManifest {
            toolkit: "svlens".into(),
            toolkit_version: env!("CARGO_PKG_VERSION").into(),
            command_line: self.command_line.clone(),
            config: self.config.clone(),
            config_digest: sha256_hex(config_text.as_bytes()),
            seeds: self.seeds.clone(),
            inputs: self.inputs.clone(),
            outputs: out.outputs(),
            status: if error.is_some() { "partial" } else { "complete" }.into(),
            error: error.map(|e| e.to_json()["error"].clone()),
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }
}

pub fn write_manifest(out: &OutputDir, manifest: &RunManifest) -> Result<()> {
    let path = out.path(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// File-name-safe form of a tensor name.
pub fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect()
}
