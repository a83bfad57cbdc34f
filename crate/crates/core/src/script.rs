//! Utterance scripts for the mock recognizer.
//!
//! A script file is NDJSON, one `{"at_s":f,"transcript":"...","vad":{...}}`
//! per line, with `at_s` nondecreasing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affect::VadTriple;
use crate::protocol::Utterance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub at_s: f64,
    pub transcript: String,
    pub vad: VadTriple,
}

impl ScriptEntry {
    /// The utterance envelope body sent for the entry at `index`.
    pub fn to_utterance(&self, index: usize) -> Utterance {
        Utterance {
            utterance_id: format!("script-{index}"),
            transcript: self.transcript.clone(),
            vad: self.vad,
            duration_ms: 0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ScriptError {
    #[error("script line {line}: {detail}")]
    Malformed { line: usize, detail: String },
    #[error("script line {line}: at_s {at_s} must be finite, >= 0 and nondecreasing")]
    BadTime { line: usize, at_s: f64 },
}

impl ScriptError {
    pub fn code(&self) -> &'static str {
        match self {
            ScriptError::Malformed { .. } => "malformed_script",
            ScriptError::BadTime { .. } => "invalid_script",
        }
    }
}

pub fn parse_script(text: &str) -> Result<Vec<ScriptEntry>, ScriptError> {
    let mut entries: Vec<ScriptEntry> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ScriptEntry = serde_json::from_str(line).map_err(|e| ScriptError::Malformed {
            line: i + 1,
            detail: e.to_string(),
        })?;
        let prev = entries.last().map_or(0.0, |e| e.at_s);
        if !(entry.at_s.is_finite() && entry.at_s >= prev) {
            return Err(ScriptError::BadTime {
                line: i + 1,
                at_s: entry.at_s,
            });
        }
        entries.push(entry);
    }
    Ok(entries)
}

pub fn format_script(entries: &[ScriptEntry]) -> String {
    entries
        .iter()
        .map(|e| serde_json::to_string(e).expect("script entry serializes") + "\n")
        .collect()
}
