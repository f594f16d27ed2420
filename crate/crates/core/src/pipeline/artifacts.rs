use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PipelineConfig, PipelineError};

pub const ARTIFACT_VERSION: u32 = 1;
pub const MANIFEST_DIR: &str = "manifests";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
    /// Data rows for CSV (header excluded) and line-delimited JSON files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub artifact_version: u32,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    pub counts: BTreeMap<String, u64>,
    pub config: serde_json::Value,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::io(path, e))
    }
}

pub fn sha256_file(path: &Path) -> Result<(String, u64), PipelineError> {
    let mut file = File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = file.read(&mut buf).map_err(|e| PipelineError::io(path, e))?;
        if n == 0 {
            break;
        }
        bytes += n as u64;
        hasher.update(&buf[..n]);
    }
    Ok((hex::encode(hasher.finalize()), bytes))
}

fn count_rows(path: &Path) -> Result<Option<usize>, PipelineError> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let header = match ext {
        "csv" | "tsv" => 1,
        "jsonl" | "ndjson" => 0,
        _ => return Ok(None),
    };
    let file = File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let mut lines = 0usize;
    for line in BufReader::new(file).lines() {
        if !line.map_err(|e| PipelineError::io(path, e))?.trim().is_empty() {
            lines += 1;
        }
    }
    Ok(Some(lines.saturating_sub(header)))
}

fn entry(path: &Path, label: String) -> Result<FileEntry, PipelineError> {
    let (sha256, bytes) = sha256_file(path)?;
    Ok(FileEntry {
        path: label,
        sha256,
        bytes,
        rows: count_rows(path)?,
    })
}

/// Bookkeeping for one stage run: resolves artifact paths, fails early on
/// missing inputs and writes the manifest on completion.
pub struct StageRun<'a> {
    pub stage: &'static str,
    pub config: &'a PipelineConfig,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    counts: BTreeMap<String, u64>,
}

impl<'a> StageRun<'a> {
    pub fn start(stage: &'static str, config: &'a PipelineConfig) -> Result<Self, PipelineError> {
        if let Some(p) = config.missing_paths().into_iter().next() {
            return Err(PipelineError::MissingInput {
                stage,
                artifact: p.display().to_string(),
                hint: "configured path does not exist".into(),
            });
        }
        std::fs::create_dir_all(&config.output_dir).map_err(|e| PipelineError::io(&config.output_dir, e))?;
        Ok(StageRun {
            stage,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            counts: BTreeMap::new(),
        })
    }

    pub fn out_path(&self, rel: &str) -> PathBuf {
        self.config.output_dir.join(rel)
    }

    /// An artifact written by an earlier stage.
    pub fn artifact(&mut self, rel: &str, producer: &str) -> Result<PathBuf, PipelineError> {
        let p = self.out_path(rel);
        if !p.is_file() {
            return Err(PipelineError::MissingInput {
                stage: self.stage,
                artifact: rel.to_string(),
                hint: format!("run `{producer}` first"),
            });
        }
        self.inputs.push(p.clone());
        Ok(p)
    }

    /// A configured external input.
    pub fn external(&mut self, path: Option<&PathBuf>, key: &str) -> Result<PathBuf, PipelineError> {
        let p = path.ok_or_else(|| PipelineError::MissingInput {
            stage: self.stage,
            artifact: format!("paths.{key}"),
            hint: "set it in the config".into(),
        })?;
        self.inputs.push(p.clone());
        Ok(p.clone())
    }

    /// A configured input that falls back to shipped data when unset.
    pub fn optional(&mut self, path: Option<&PathBuf>) -> Option<PathBuf> {
        let p = path.cloned();
        if let Some(p) = &p {
            self.inputs.push(p.clone());
        }
        p
    }

    pub fn output(&mut self, rel: &str) -> Result<PathBuf, PipelineError> {
        let p = self.out_path(rel);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        }
        if !self.outputs.contains(&p) {
            self.outputs.push(p.clone());
        }
        Ok(p)
    }

    pub fn count(&mut self, key: &str, n: u64) {
        *self.counts.entry(key.to_string()).or_insert(0) += n;
    }

    pub fn finish(self) -> Result<Manifest, PipelineError> {
        let out_dir = &self.config.output_dir;
        let label = |p: &Path| {
            p.strip_prefix(out_dir)
                .map(|r| r.to_string_lossy().replace('\\', "/"))
                .unwrap_or_else(|_| p.display().to_string())
        };
        let mut inputs = Vec::new();
        for p in &self.inputs {
            inputs.push(entry(p, label(p))?);
        }
        let mut outputs = Vec::new();
        for p in &self.outputs {
            outputs.push(entry(p, label(p))?);
        }
        outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            stage: self.stage.to_string(),
            artifact_version: ARTIFACT_VERSION,
            inputs,
            outputs,
            counts: self.counts,
            config: serde_json::to_value(self.config).map_err(|e| PipelineError::Config(e.to_string()))?,
        };
        let path = out_dir.join(MANIFEST_DIR).join(format!("{}.json", self.stage));
        std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| PipelineError::io(&path, e))?;
        write_json(&path, &manifest)?;
        log::info!("{}: wrote {} artifacts", self.stage, manifest.outputs.len());
        Ok(manifest)
    }
}

pub fn write_csv<T: Serialize, I: IntoIterator<Item = T>>(path: &Path, rows: I) -> Result<usize, PipelineError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| PipelineError::io(path, e))?;
    let mut n = 0;
    for r in rows {
        w.serialize(r).map_err(|e| PipelineError::io(path, e))?;
        n += 1;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))?;
    Ok(n)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| PipelineError::io(path, e))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| PipelineError::io(path, format!("row {}: {e}", i + 1))))
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::io(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}
