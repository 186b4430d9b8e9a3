// SPDX-License-Identifier: Apache-2.0

//! File formats and the run manifest.
//!
//! Reports and tables are JSON, bulk series are CSV. Every file is written to
//! a temporary sibling and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::calibration::{CalibrationTable, CodeHistogram};
use crate::montecarlo::{HistogramBin, ResidualRow, SyncReport};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

fn fs_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Fs {
        path: path.to_owned(),
        source,
    }
}

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(fs_err(&tmp))?;
        f.write_all(bytes).map_err(fs_err(&tmp))?;
        f.sync_all().map_err(fs_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(fs_err(path))
}

pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serialisable");
    v.push(b'\n');
    v
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(fs_err(path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.to_owned(),
        source,
    })
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, IoError> {
    let csv_err = |source| IoError::Csv {
        path: path.to_owned(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().collect::<Result<_, _>>().map_err(csv_err)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeCount {
    pub code: usize,
    pub count: u64,
}

/// `code,count`
pub fn histogram_csv(hist: &CodeHistogram) -> Vec<u8> {
    csv_bytes(
        hist.counts()
            .iter()
            .enumerate()
            .map(|(code, &count)| CodeCount { code, count }),
    )
}

pub fn read_histogram_csv(path: &Path) -> Result<Vec<CodeCount>, IoError> {
    read_csv(path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualCsvRow {
    pub trial: usize,
    pub channel: usize,
    pub converged: bool,
    pub residual_ps: f64,
    pub iterations: u32,
}

/// `trial,channel,converged,residual_ps,iterations`
pub fn residuals_csv(rows: &[ResidualRow]) -> Vec<u8> {
    csv_bytes(rows.iter().map(|r| ResidualCsvRow {
        trial: r.trial,
        channel: r.channel,
        converged: r.converged,
        residual_ps: r.residual_ps,
        iterations: r.iterations,
    }))
}

pub fn read_residuals_csv(path: &Path) -> Result<Vec<ResidualCsvRow>, IoError> {
    read_csv(path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentCsvRow {
    pub trial: usize,
    pub converged: bool,
    pub iterations: u32,
    pub residual_ps: f64,
    pub pi_code: u32,
}

/// `trial,converged,iterations,residual_ps,pi_code`, one row per aligned channel.
pub fn alignments_csv(rows: &[ResidualRow]) -> Vec<u8> {
    csv_bytes(rows.iter().map(|r| AlignmentCsvRow {
        trial: r.trial,
        converged: r.converged,
        iterations: r.iterations,
        residual_ps: r.residual_ps,
        pi_code: r.pi_code,
    }))
}

pub fn read_alignments_csv(path: &Path) -> Result<Vec<AlignmentCsvRow>, IoError> {
    read_csv(path)
}

/// `bin_center_ps,count`
pub fn residual_histogram_csv(bins: &[HistogramBin]) -> Vec<u8> {
    csv_bytes(bins)
}

pub fn read_residual_histogram_csv(path: &Path) -> Result<Vec<HistogramBin>, IoError> {
    read_csv(path)
}

pub fn read_table(path: &Path) -> Result<CalibrationTable, IoError> {
    read_json(path)
}

pub fn read_report(path: &Path) -> Result<SyncReport, IoError> {
    read_json(path)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_digest: String,
    pub master_seed: u64,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<OutputFile>,
}

pub fn unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

/// Collects a command's outputs and finishes with the manifest.
pub struct RunWriter {
    dir: PathBuf,
    command: String,
    master_seed: u64,
    config_digest: String,
    started_unix_ms: u128,
    outputs: Vec<OutputFile>,
}

impl RunWriter {
    /// Creates `dir` and stores the resolved config in it.
    pub fn create(
        dir: &Path,
        command: &str,
        master_seed: u64,
        config_json: &str,
    ) -> Result<Self, IoError> {
        fs::create_dir_all(dir).map_err(fs_err(dir))?;
        let mut w = Self {
            dir: dir.to_owned(),
            command: command.to_owned(),
            master_seed,
            config_digest: sha256_hex(config_json.as_bytes()),
            started_unix_ms: unix_ms(),
            outputs: Vec::new(),
        };
        w.write(CONFIG_FILE, config_json.as_bytes())?;
        Ok(w)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, IoError> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.outputs.retain(|o| o.file != name);
        self.outputs.push(OutputFile {
            file: name.to_owned(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    pub fn finish(self) -> Result<RunManifest, IoError> {
        let manifest = RunManifest {
            command: self.command,
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            config_digest: self.config_digest,
            master_seed: self.master_seed,
            started_unix_ms: self.started_unix_ms,
            finished_unix_ms: unix_ms(),
            outputs: self.outputs,
        };
        write_atomic(&self.dir.join(MANIFEST_FILE), &json_bytes(&manifest))?;
        Ok(manifest)
    }
}
