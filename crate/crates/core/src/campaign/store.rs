//! Append-only JSONL response store with a sidecar campaign manifest.
//!
//! One record per line, UTF-8. Resume semantics come from scanning keys on
//! open; the store never rewrites existing lines. Appends go through a
//! single writer.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CampaignPlan, CellKey, ExecutionSummary, GenerationSettings, ResponseRecord};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store io error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed store line {line} in {path}: {source}")]
    MalformedLine {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
    #[error("duplicate key: model={model} prompt={prompt_id} T={temperature} run={run}")]
    DuplicateKey {
        model: String,
        prompt_id: String,
        temperature: f64,
        run: u32,
    },
    #[error("manifest serialization failed: {0}")]
    Manifest(#[from] serde_json::Error),
}

fn io_err(path: &Path, source: std::io::Error) -> StoreError {
    StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// An open response store backed by one JSONL file.
#[derive(Debug)]
pub struct ResponseStore {
    path: PathBuf,
    records: Vec<ResponseRecord>,
    index: HashMap<CellKey, usize>,
}

impl ResponseStore {
    /// Open a store, loading any existing records. A missing file opens as
    /// an empty store; the file is created on first append.
    pub fn open(path: impl AsRef<Path>) -> Result<ResponseStore, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut store = ResponseStore {
            path: path.clone(),
            records: Vec::new(),
            index: HashMap::new(),
        };
        if path.exists() {
            let file = File::open(&path).map_err(|e| io_err(&path, e))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| io_err(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: ResponseRecord =
                    serde_json::from_str(&line).map_err(|source| StoreError::MalformedLine {
                        path: path.display().to_string(),
                        line: i + 1,
                        source,
                    })?;
                store.index_record(&record)?;
                store.records.push(record);
            }
        }
        Ok(store)
    }

    fn index_record(&mut self, record: &ResponseRecord) -> Result<(), StoreError> {
        let cell = record.key.cell();
        if self.index.contains_key(&cell) {
            return Err(StoreError::DuplicateKey {
                model: record.key.model.clone(),
                prompt_id: record.key.prompt_id.clone(),
                temperature: record.key.temperature,
                run: record.key.run,
            });
        }
        self.index.insert(cell, self.records.len());
        Ok(())
    }

    /// Append one record, rejecting duplicate keys, and flush it to disk.
    pub fn append(&mut self, record: ResponseRecord) -> Result<(), StoreError> {
        self.index_record(&record)?;
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| io_err(&self.path, e))?;
        let line = serde_json::to_string(&record)?;
        writeln!(file, "{line}").map_err(|e| io_err(&self.path, e))?;
        file.flush().map_err(|e| io_err(&self.path, e))?;
        self.records.push(record);
        Ok(())
    }

    /// Append a batch, rolling the index back on the first duplicate.
    pub fn append_all(&mut self, records: Vec<ResponseRecord>) -> Result<usize, StoreError> {
        let mut appended = 0;
        for record in records {
            self.append(record)?;
            appended += 1;
        }
        Ok(appended)
    }

    pub fn contains(&self, key: &CellKey) -> bool {
        self.index.contains_key(key)
    }

    pub fn get(&self, key: &CellKey) -> Option<&ResponseRecord> {
        self.index.get(key).map(|&i| &self.records[i])
    }

    pub fn records(&self) -> &[ResponseRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &CellKey> {
        self.index.keys()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Path of the sidecar manifest file.
    pub fn manifest_path(&self) -> PathBuf {
        let mut name = self
            .path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "store".to_string());
        name.push_str(".manifest.json");
        self.path.with_file_name(name)
    }

    /// Write the campaign manifest next to the store file.
    pub fn write_manifest(&self, manifest: &CampaignManifest) -> Result<(), StoreError> {
        let path = self.manifest_path();
        let json = serde_json::to_string_pretty(manifest)?;
        std::fs::write(&path, json.as_bytes()).map_err(|e| io_err(&path, e))
    }

    pub fn read_manifest(&self) -> Result<Option<CampaignManifest>, StoreError> {
        let path = self.manifest_path();
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        Ok(Some(serde_json::from_str(&text)?))
    }
}

/// Capability notes for one endpoint, recorded when the harness degrades.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EndpointCapability {
    /// False once the endpoint has rejected the min_p extension field.
    pub accepts_min_p: bool,
}

/// One permanently failed cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEntry {
    pub model: String,
    pub prompt_id: String,
    pub temperature: f64,
    pub run: u32,
    pub attempts: u32,
    pub error: String,
}

/// Sidecar record of what a campaign run asked for and how endpoints behaved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignManifest {
    pub schema_version: u32,
    /// Exact system prompt per model name.
    pub system_prompts: BTreeMap<String, String>,
    pub settings: GenerationSettings,
    pub models: Vec<String>,
    pub prompt_ids: Vec<String>,
    pub temperatures: Vec<f64>,
    pub runs: u32,
    pub planned_cells: usize,
    pub capabilities: BTreeMap<String, EndpointCapability>,
    pub failures: Vec<FailureEntry>,
}

impl CampaignManifest {
    pub fn from_run(plan: &CampaignPlan, summary: &ExecutionSummary) -> CampaignManifest {
        let mut system_prompts = BTreeMap::new();
        let mut capabilities = BTreeMap::new();
        for m in &plan.models {
            system_prompts.insert(m.name.clone(), m.effective_system_prompt().to_string());
            capabilities.insert(
                m.endpoint.clone(),
                EndpointCapability {
                    accepts_min_p: !summary.degraded_endpoints.contains(&m.endpoint),
                },
            );
        }
        CampaignManifest {
            schema_version: 1,
            system_prompts,
            settings: plan.settings.clone(),
            models: plan.models.iter().map(|m| m.name.clone()).collect(),
            prompt_ids: plan.prompt_ids.clone(),
            temperatures: plan.temperatures.clone(),
            runs: plan.runs,
            planned_cells: plan.cell_count(),
            capabilities,
            failures: summary.failures.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::RecordKey;

    fn record(model: &str, prompt: &str, temp: f64, run: u32, text: &str) -> ResponseRecord {
        ResponseRecord::new(
            RecordKey {
                model: model.into(),
                prompt_id: prompt.into(),
                temperature: temp,
                run,
            },
            text.into(),
        )
    }

    #[test]
    fn append_and_reopen_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        {
            let mut store = ResponseStore::open(&path).unwrap();
            store.append(record("base", "trolley", 0.1, 1, "hello world")).unwrap();
            store.append(record("base", "trolley", 0.2, 1, "other")).unwrap();
        }
        let store = ResponseStore::open(&path).unwrap();
        assert_eq!(store.len(), 2);
        let rec = store
            .get(&record("base", "trolley", 0.1, 1, "").key.cell())
            .unwrap();
        assert_eq!(rec.text, "hello world");
        assert_eq!(rec.words, 2);
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let mut store = ResponseStore::open(&path).unwrap();
        store.append(record("base", "trolley", 0.1, 1, "a")).unwrap();
        let err = store.append(record("base", "trolley", 0.1, 1, "b")).unwrap_err();
        assert!(matches!(err, StoreError::DuplicateKey { .. }));
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn wire_format_uses_documented_keys() {
        let rec = record("base", "trolley", 0.1, 1, "two words");
        let value: serde_json::Value = serde_json::to_value(&rec).unwrap();
        let obj = value.as_object().unwrap();
        for key in ["model", "prompt_id", "temperature", "run", "text", "words", "fingerprint", "created_at"] {
            assert!(obj.contains_key(key), "missing key {key}");
        }
        assert_eq!(obj["words"], 2);
    }

    #[test]
    fn malformed_line_is_reported_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        std::fs::write(&path, "{\"model\": \"x\"\n").unwrap();
        match ResponseStore::open(&path) {
            Err(StoreError::MalformedLine { line: 1, .. }) => {}
            other => panic!("expected MalformedLine, got {other:?}"),
        }
    }
}
