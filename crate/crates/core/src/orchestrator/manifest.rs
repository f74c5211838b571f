//! Append-only JSONL manifest: one record per pipeline step.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::editor::{Severity, Variant};
use crate::error::ManifestError;
use crate::ingest::DayNight;
use crate::qc::{FailReason, GatePath, QcVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    /// The backend returned an image and QC ran.
    Generated,
    /// Not requested because the sham failed QC.
    Skipped,
    /// Backend or input failure; excluded from pass-rate denominators.
    Errored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub run_id: String,
    pub timestamp: DateTime<Utc>,
    pub base_image_id: String,
    pub species: String,
    pub day_night: DayNight,
    pub order_index: u8,
    pub variant: Variant,
    pub severity: Severity,
    pub status: StepStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<FailReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_path: Option<GatePath>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_mae: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_mae: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ssim: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_area_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub params_fingerprint: String,
    pub template_version: String,
    pub seed: u64,
    pub backend_id: String,
    #[serde(default)]
    pub latency_ms: u64,
    #[serde(default)]
    pub attempts: u32,
}

/// Rounds a score to the 4 decimals stored in the manifest.
pub fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

impl ManifestEntry {
    pub fn key(&self) -> (String, String, u8) {
        (
            self.run_id.clone(),
            self.base_image_id.clone(),
            self.order_index,
        )
    }

    /// Copies verdict fields in, with scores rounded to 4 decimals.
    pub fn set_verdict(&mut self, verdict: &QcVerdict) {
        self.pass = Some(verdict.pass);
        self.reason = Some(verdict.reason);
        self.gate_path = Some(verdict.gate_path);
        self.raw_mae = verdict.score.map(|s| round4(s.raw_mae));
        self.norm_mae = verdict.score.map(|s| round4(s.norm_mae));
        self.ssim = verdict.score.map(|s| round4(s.ssim));
        self.mask_area_fraction = Some(round4(verdict.mask.area_fraction));
    }

    pub fn passed(&self) -> bool {
        self.status == StepStatus::Generated && self.pass == Some(true)
    }
}

/// Open manifest with the set of keys already written.
pub struct Manifest {
    path: PathBuf,
    file: File,
    keys: HashSet<(String, String, u8)>,
}

impl Manifest {
    /// Opens or creates a manifest and returns the entries already in it.
    /// A torn final line (no newline, left by a crash mid-write) is cut
    /// off; any other unparseable line is reported as corruption.
    pub fn open(path: impl AsRef<Path>) -> Result<(Manifest, Vec<ManifestEntry>), ManifestError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| ManifestError::Io {
            path: path.clone(),
            source,
        };
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io)?;
        let mut text = String::new();
        file.read_to_string(&mut text).map_err(io)?;

        let complete_len = text.rfind('\n').map_or(0, |i| i + 1);
        if complete_len < text.len() {
            log::warn!(
                "{}: dropping {} bytes of an unterminated final line",
                path.display(),
                text.len() - complete_len
            );
            file.set_len(complete_len as u64).map_err(io)?;
            file.seek(SeekFrom::End(0)).map_err(io)?;
        }
        let entries = parse_lines(&text[..complete_len], &path)?;
        let mut keys = HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            if !keys.insert(e.key()) {
                return Err(ManifestError::Corrupt {
                    path: path.clone(),
                    line: i + 1,
                    message: format!(
                        "duplicate entry for ({}, {}, {})",
                        e.run_id, e.base_image_id, e.order_index
                    ),
                });
            }
        }
        Ok((Manifest { path, file, keys }, entries))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn contains(&self, run_id: &str, base_image_id: &str, order_index: u8) -> bool {
        self.keys
            .contains(&(run_id.to_string(), base_image_id.to_string(), order_index))
    }

    /// Writes one entry as a single line and flushes it.
    pub fn append(&mut self, entry: &ManifestEntry) -> Result<(), ManifestError> {
        if !self.keys.insert(entry.key()) {
            return Err(ManifestError::DuplicateEntry {
                run_id: entry.run_id.clone(),
                base_image_id: entry.base_image_id.clone(),
                order_index: entry.order_index,
            });
        }
        let mut line = serde_json::to_vec(entry).expect("entry serializes");
        line.push(b'\n');
        let io = |source| ManifestError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(&line).map_err(io)?;
        self.file.flush().map_err(io)
    }
}

fn parse_lines(text: &str, path: &Path) -> Result<Vec<ManifestEntry>, ManifestError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ManifestError::Corrupt {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Reads a manifest without modifying it. An unterminated final line is
/// ignored, so a manifest that is still being written reads as a prefix.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>, ManifestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let complete_len = text.rfind('\n').map_or(0, |i| i + 1);
    parse_lines(&text[..complete_len], path)
}
