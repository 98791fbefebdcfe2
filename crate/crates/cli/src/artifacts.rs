//! Output directory bookkeeping: per-stage manifests, digests and the
//! refusal to combine artifacts from different configurations.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::hex;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    /// File name to hex SHA-256.
    pub files: BTreeMap<String, String>,
    /// Upstream stage name to its manifest digest.
    pub upstream: BTreeMap<String, String>,
}

pub struct OutDir {
    pub root: PathBuf,
    pub config_hash: String,
    pub seed: u64,
}

pub fn manifest_name(stage: &str) -> String {
    format!("{stage}.manifest.json")
}

fn digest(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Files written by one stage, recorded into its manifest on `finish`.
pub struct StageWriter<'a> {
    out: &'a OutDir,
    stage: &'static str,
    files: BTreeMap<String, String>,
    upstream: BTreeMap<String, String>,
}

impl OutDir {
    pub fn new(root: PathBuf, config_hash: String, seed: u64) -> CliResult<Self> {
        fs::create_dir_all(&root).map_err(|e| CliError::write(&root, e))?;
        Ok(Self { root, config_hash, seed })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Manifest of an upstream stage, checked against the current config.
    pub fn require(&self, stage: &'static str) -> CliResult<Manifest> {
        let path = self.path(&manifest_name(stage));
        let text = fs::read_to_string(&path).map_err(|_| CliError::MissingStage {
            stage,
            reason: format!("{} not found; run `hybridlift {stage}` first", path.display()),
        })?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::MissingStage {
            stage,
            reason: format!("unreadable manifest {}: {e}", path.display()),
        })?;
        if m.config_hash != self.config_hash {
            return Err(CliError::MissingStage {
                stage,
                reason: format!(
                    "artifacts in {} were produced by config {}, current config is {}; rerun `hybridlift {stage}`",
                    self.root.display(),
                    short(&m.config_hash),
                    short(&self.config_hash)
                ),
            });
        }
        Ok(m)
    }

    /// Bytes of an artifact listed in `manifest`, verified against its digest.
    pub fn read(&self, manifest: &Manifest, name: &str) -> CliResult<Vec<u8>> {
        let stage: &'static str = stage_name(&manifest.stage);
        let expected = manifest.files.get(name).ok_or_else(|| CliError::MissingStage {
            stage,
            reason: format!("{name} is not among its outputs"),
        })?;
        let path = self.path(name);
        let bytes = fs::read(&path).map_err(|_| CliError::MissingStage {
            stage,
            reason: format!("{} is missing", path.display()),
        })?;
        if &digest(&bytes) != expected {
            return Err(CliError::MissingStage {
                stage,
                reason: format!("{} changed after the stage ran; rerun it", path.display()),
            });
        }
        Ok(bytes)
    }

    pub fn read_string(&self, manifest: &Manifest, name: &str) -> CliResult<String> {
        String::from_utf8(self.read(manifest, name)?)
            .map_err(|_| CliError::Data(format!("{name} is not valid UTF-8")))
    }

    pub fn stage(&self, stage: &'static str) -> StageWriter<'_> {
        // a rerun invalidates the old manifest before anything is overwritten
        let _ = fs::remove_file(self.path(&manifest_name(stage)));
        StageWriter {
            out: self,
            stage,
            files: BTreeMap::new(),
            upstream: BTreeMap::new(),
        }
    }
}

fn stage_name(s: &str) -> &'static str {
    crate::stages::STAGES.iter().find(|n| **n == s).copied().unwrap_or("unknown")
}

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

impl StageWriter<'_> {
    pub fn depends_on(&mut self, m: &Manifest) {
        let json = serde_json::to_vec(m).expect("manifest serializes");
        self.upstream.insert(m.stage.clone(), digest(&json));
    }

    pub fn bytes(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.out.path(name);
        fs::write(&path, bytes).map_err(|e| CliError::write(&path, e))?;
        self.files.insert(name.to_string(), digest(bytes));
        Ok(path)
    }

    pub fn text(&mut self, name: &str, text: &str) -> CliResult<PathBuf> {
        self.bytes(name, text.as_bytes())
    }

    /// Header plus rows, comma separated.
    pub fn csv<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> CliResult<PathBuf>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let bytes = csv_bytes(header, rows).map_err(|e| CliError::write(&self.out.path(name), e))?;
        self.bytes(name, &bytes)
    }

    /// Same as [`csv`](Self::csv), gzip-compressed with a zero timestamp.
    pub fn csv_gz<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> CliResult<PathBuf>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let path = self.out.path(name);
        let plain = csv_bytes(header, rows).map_err(|e| CliError::write(&path, e))?;
        let mut gz = GzEncoder::new(Vec::new(), Compression::default());
        gz.write_all(&plain).map_err(|e| CliError::write(&path, e))?;
        let bytes = gz.finish().map_err(|e| CliError::write(&path, e))?;
        self.bytes(name, &bytes)
    }

    pub fn finish(self) -> CliResult<Manifest> {
        let m = Manifest {
            stage: self.stage.to_string(),
            config_hash: self.out.config_hash.clone(),
            seed: self.out.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            files: self.files,
            upstream: self.upstream,
        };
        let path = self.out.path(&manifest_name(self.stage));
        let json = serde_json::to_string_pretty(&m).expect("manifest serializes");
        fs::write(&path, json).map_err(|e| CliError::write(&path, e))?;
        Ok(m)
    }
}

fn csv_bytes<I, R>(header: &[&str], rows: I) -> csv::Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}
