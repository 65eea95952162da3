use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    /// Epoch seconds.
    pub ts: f64,
    pub session: String,
    pub step: u32,
    pub tool: String,
    pub input_digest: String,
    pub outcome: String,
}

pub fn digest(input: &str) -> String {
    hex::encode(Sha256::digest(input.as_bytes()))
}

/// Append-only record of every tool call. Kept in memory and, when opened
/// on a path, mirrored to a JSON Lines file.
#[derive(Debug, Default)]
pub struct AuditLog {
    entries: Mutex<Vec<AuditEntry>>,
    file: Mutex<Option<File>>,
}

impl AuditLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: impl AsRef<Path>) -> crate::Result<Self> {
        let p = path.as_ref();
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir.display().to_string(), e))?;
        }
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(p)
            .map_err(|e| crate::Error::io(p.display().to_string(), e))?;
        Ok(Self {
            entries: Mutex::new(Vec::new()),
            file: Mutex::new(Some(f)),
        })
    }

    pub fn record(&self, session: &str, step: u32, tool: &str, input: &str, outcome: impl Into<String>) {
        let entry = AuditEntry {
            ts: chrono::Utc::now().timestamp_micros() as f64 / 1e6,
            session: session.to_string(),
            step,
            tool: tool.to_string(),
            input_digest: digest(input),
            outcome: outcome.into(),
        };
        if let Some(f) = self.file.lock().unwrap_or_else(|e| e.into_inner()).as_mut() {
            let line = serde_json::to_string(&entry).expect("audit entry serializes");
            if let Err(e) = writeln!(f, "{line}") {
                log::warn!("audit log write failed: {e}");
            }
        }
        self.entries.lock().unwrap_or_else(|e| e.into_inner()).push(entry);
    }

    pub fn entries(&self) -> Vec<AuditEntry> {
        self.entries.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}
