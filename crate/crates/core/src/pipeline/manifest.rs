use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunMode;
use super::PipelineError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkerStatus {
    Pending,
    Completed,
    Discarded,
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerRecord {
    pub index: usize,
    pub status: WorkerStatus,
    pub accepted: usize,
    pub rejected: usize,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Set when this worker was restarted by a resume.
    pub resumed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl WorkerRecord {
    pub fn pending(index: usize) -> Self {
        Self { index, status: WorkerStatus::Pending, accepted: 0, rejected: 0, input_tokens: 0, output_tokens: 0, resumed: false, error: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_hash: String,
    pub mode: RunMode,
    /// False while any worker is still pending.
    pub finished: bool,
    pub workers: Vec<WorkerRecord>,
    pub accepted: usize,
    pub rejected: usize,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub wall_time_secs: f64,
}

impl RunManifest {
    pub fn new(run_id: String, config_hash: String, mode: RunMode, workers: usize) -> Self {
        Self {
            run_id,
            config_hash,
            mode,
            finished: false,
            workers: (0..workers).map(WorkerRecord::pending).collect(),
            accepted: 0,
            rejected: 0,
            input_tokens: 0,
            output_tokens: 0,
            wall_time_secs: 0.0,
        }
    }

    /// Recompute totals from the worker records.
    pub fn refresh_totals(&mut self) {
        self.accepted = self.workers.iter().map(|w| w.accepted).sum();
        self.rejected = self.workers.iter().map(|w| w.rejected).sum();
        self.input_tokens = self.workers.iter().map(|w| w.input_tokens).sum();
        self.output_tokens = self.workers.iter().map(|w| w.output_tokens).sum();
        self.finished = self.workers.iter().all(|w| w.status != WorkerStatus::Pending);
    }

    pub fn all_completed(&self) -> bool {
        self.workers.iter().all(|w| w.status == WorkerStatus::Completed)
    }

    /// 0 when every worker completed, 4 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.all_completed() {
            0
        } else {
            4
        }
    }

    pub fn load(run_dir: &Path) -> Result<Self, PipelineError> {
        let path = run_dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
        let manifest: Self = serde_json::from_str(&text).map_err(|e| PipelineError::CorruptManifest(format!("{}: {e}", path.display())))?;
        for (i, w) in manifest.workers.iter().enumerate() {
            if w.index != i {
                return Err(PipelineError::CorruptManifest(format!("worker entry {i} carries index {}", w.index)));
            }
        }
        Ok(manifest)
    }

    pub fn store(&self, run_dir: &Path) -> Result<(), PipelineError> {
        let mut body = serde_json::to_string_pretty(self).expect("manifest serializes");
        body.push('\n');
        write_atomic(&run_dir.join(MANIFEST_FILE), body.as_bytes())
    }
}

/// Write through a temporary file in the same directory, then rename, so
/// readers see either the old or the new content.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| PipelineError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| PipelineError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| PipelineError::io(path, e))?;
    tmp.persist(path).map_err(|e| PipelineError::io(path, e.error))?;
    Ok(())
}
