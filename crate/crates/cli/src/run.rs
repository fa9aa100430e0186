//! Run directory layout, checksummed artifacts and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use asymmap::scene::sha256_hex;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Pipeline stages in execution order.
pub const STAGES: [&str; 5] = ["gen", "classify", "attack", "eval", "replay"];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StageRecord {
    /// Run-relative path to SHA-256 of every file the stage wrote.
    pub artifacts: BTreeMap<String, String>,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: RunConfig,
    pub stages: BTreeMap<String, StageRecord>,
}

/// Writes `bytes` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("artifact serializes");
    out.push(b'\n');
    out
}

#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn manifest(&self) -> Result<Option<RunManifest>> {
        let p = self.path(MANIFEST);
        if !p.exists() {
            return Ok(None);
        }
        let bytes = fs::read(&p).map_err(|e| CliError::io(&p, e))?;
        serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
    }

    /// Record of a finished stage, or an error naming it.
    pub fn stage(&self, stage: &str) -> Result<StageRecord> {
        self.manifest()?
            .and_then(|m| m.stages.get(stage).cloned())
            .ok_or_else(|| CliError::MissingArtifact { stage: stage.into(), path: self.path(MANIFEST).display().to_string() })
    }

    /// Reads an artifact of `stage`, checking it against the manifest.
    pub fn read_verified(&self, stage: &str, record: &StageRecord, rel: &str) -> Result<Vec<u8>> {
        let missing = || CliError::MissingArtifact { stage: stage.into(), path: self.path(rel).display().to_string() };
        let want = record.artifacts.get(rel).ok_or_else(missing)?;
        let bytes = fs::read(self.path(rel)).map_err(|_| missing())?;
        if &sha256_hex(&bytes) != want {
            return Err(CliError::Checksum { stage: stage.into(), path: self.path(rel).display().to_string() });
        }
        Ok(bytes)
    }

    pub fn read_json<T: DeserializeOwned>(&self, stage: &str, record: &StageRecord, rel: &str) -> Result<T> {
        let bytes = self.read_verified(stage, record, rel)?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", self.path(rel).display())))
    }

    /// Checks every artifact of `stage`.
    pub fn verify_stage(&self, stage: &str) -> Result<StageRecord> {
        let record = self.stage(stage)?;
        for rel in record.artifacts.keys() {
            self.read_verified(stage, &record, rel)?;
        }
        Ok(record)
    }

    /// Stores the stage record and config snapshot. Records of later stages
    /// are dropped since they no longer follow from their inputs.
    pub fn commit(&self, stage: &str, writer: StageWriter, elapsed: Duration, config: &RunConfig) -> Result<()> {
        let mut m = self.manifest()?.unwrap_or_else(|| RunManifest {
            tool_version: TOOL_VERSION.into(),
            config: config.clone(),
            stages: BTreeMap::new(),
        });
        m.tool_version = TOOL_VERSION.into();
        m.config = config.clone();
        if let Some(i) = STAGES.iter().position(|s| *s == stage) {
            for later in &STAGES[i + 1..] {
                m.stages.remove(*later);
            }
        }
        m.stages.insert(stage.into(), StageRecord { artifacts: writer.artifacts, wall_clock_s: elapsed.as_secs_f64() });
        write_atomic(&self.path(MANIFEST), &to_json(&m))
    }
}

/// Collects the checksums of files written by one stage.
#[derive(Debug, Default)]
pub struct StageWriter {
    artifacts: BTreeMap<String, String>,
}

impl StageWriter {
    pub fn write(&mut self, run: &RunDir, rel: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&run.path(rel), bytes)?;
        self.artifacts.insert(rel.into(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, run: &RunDir, rel: &str, v: &T) -> Result<()> {
        self.write(run, rel, &to_json(v))
    }

    /// Records a file some other writer already put in place.
    pub fn record(&mut self, run: &RunDir, rel: &str) -> Result<()> {
        let p = run.path(rel);
        let bytes = fs::read(&p).map_err(|e| CliError::io(&p, e))?;
        self.artifacts.insert(rel.into(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn merge(&mut self, other: StageWriter) {
        self.artifacts.extend(other.artifacts);
    }
}
