//! Append-only transcript store.
//!
//! Transcripts persist as line-delimited JSON so runs are diff-able and
//! fixtures stay plain text. Entries are immutable once written; the key
//! is SHA-256 over the fields that determine the response.

use super::{CompletionRequest, CompletionResponse};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

/// Deterministic cache key over (provider, model, temperature, prompt).
///
/// The canonical encoding joins the fields with NUL separators; the
/// temperature uses Rust's shortest round-trip float formatting, which is
/// stable across platforms.
pub fn cache_key(provider: &str, model: &str, temperature: f64, prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(provider.as_bytes());
    hasher.update([0]);
    hasher.update(model.as_bytes());
    hasher.update([0]);
    hasher.update(temperature.to_string().as_bytes());
    hasher.update([0]);
    hasher.update(prompt.as_bytes());
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub key: String,
    pub provider: String,
    pub request: CompletionRequest,
    pub response_text: String,
    /// Unix seconds at capture time.
    pub timestamp: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    #[serde(default)]
    pub retries: u32,
}

impl TranscriptEntry {
    pub fn capture(
        provider: &str,
        request: &CompletionRequest,
        response: &CompletionResponse,
    ) -> TranscriptEntry {
        TranscriptEntry {
            key: response.key.clone(),
            provider: provider.to_string(),
            request: request.clone(),
            response_text: response.text.clone(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            input_tokens: response.input_tokens,
            output_tokens: response.output_tokens,
            retries: response.retries,
        }
    }

    /// Recompute the key from the stored request fields.
    pub fn expected_key(&self) -> String {
        cache_key(
            &self.provider,
            &self.request.model,
            self.request.temperature,
            &self.request.prompt,
        )
    }
}

/// Persistent transcript store: in-memory index over an append-only JSONL
/// file. Writes are serialized; reads are concurrent.
pub struct TranscriptStore {
    path: PathBuf,
    entries: RwLock<HashMap<String, TranscriptEntry>>,
    writer: Mutex<()>,
}

impl TranscriptStore {
    /// Open (or create) a store file and load its entries.
    pub fn open(path: impl Into<PathBuf>) -> io::Result<TranscriptStore> {
        let path = path.into();
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: TranscriptEntry = serde_json::from_str(&line).map_err(|e| {
                    io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("transcript line {}: {e}", i + 1),
                    )
                })?;
                entries.insert(entry.key.clone(), entry);
            }
        } else if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        Ok(TranscriptStore {
            path,
            entries: RwLock::new(entries),
            writer: Mutex::new(()),
        })
    }

    /// In-memory store backed by no file; appends stay in memory.
    pub fn in_memory() -> TranscriptStore {
        TranscriptStore {
            path: PathBuf::new(),
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(()),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, key: &str) -> Option<TranscriptEntry> {
        self.entries.read().expect("transcript lock").get(key).cloned()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.read().expect("transcript lock").contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("transcript lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn keys(&self) -> Vec<String> {
        let mut keys: Vec<String> = self
            .entries
            .read()
            .expect("transcript lock")
            .keys()
            .cloned()
            .collect();
        keys.sort();
        keys
    }

    /// Append an entry. First write for a key wins; identical re-appends
    /// are no-ops.
    pub fn append(&self, entry: &TranscriptEntry) -> io::Result<()> {
        let _guard = self.writer.lock().expect("transcript writer lock");
        {
            let entries = self.entries.read().expect("transcript lock");
            if entries.contains_key(&entry.key) {
                return Ok(());
            }
        }
        if !self.path.as_os_str().is_empty() {
            let mut line = serde_json::to_string(entry).map_err(io::Error::other)?;
            line.push('\n');
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&self.path)?;
            file.write_all(line.as_bytes())?;
        }
        self.entries
            .write()
            .expect("transcript lock")
            .insert(entry.key.clone(), entry.clone());
        Ok(())
    }

    /// Integrity check: recompute each entry's key from its request
    /// fields. Returns the keys that do not match their contents.
    pub fn verify(&self) -> Vec<String> {
        let entries = self.entries.read().expect("transcript lock");
        let mut bad: Vec<String> = entries
            .values()
            .filter(|e| e.expected_key() != e.key)
            .map(|e| e.key.clone())
            .collect();
        bad.sort();
        bad
    }

    /// The provider name shared by every entry, if the store is
    /// single-provider (replay infers its key prefix from this).
    pub fn sole_provider(&self) -> Option<String> {
        let entries = self.entries.read().expect("transcript lock");
        let mut providers = entries.values().map(|e| e.provider.as_str());
        let first = providers.next()?;
        if providers.all(|p| p == first) {
            Some(first.to_string())
        } else {
            None
        }
    }

    /// Token totals across the store: (input, output).
    pub fn token_totals(&self) -> (u64, u64) {
        let entries = self.entries.read().expect("transcript lock");
        entries.values().fold((0, 0), |(i, o), e| {
            (i + e.input_tokens, o + e.output_tokens)
        })
    }
}
