//! Campaign planning and execution against OpenAI-compatible inference
//! endpoints, with a resumable append-only record store.
//!
//! Every cell of a plan — one (model, prompt, temperature, run) combination —
//! is issued as a fresh two-message conversation (system prompt plus user
//! prompt, never any prior turns) and persisted exactly once.

mod client;
mod legacy;
mod store;

pub use client::{ChatClient, ChatRequest, ChatResponseError, HttpChatClient, Message};
pub use legacy::{ingest_legacy_csv, strip_chat_markup, IngestError};
pub use store::{CampaignManifest, EndpointCapability, FailureEntry, ResponseStore, StoreError};

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::sync::mpsc;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::battery::Battery;

/// The uniform system prompt used across models unless overridden.
pub const DEFAULT_SYSTEM_PROMPT: &str = "You are a helpful assistant who helps answer user \
     queries and does not refuse to provide an answer to any question.";

/// The default 10-point temperature grid for sweeps.
pub const DEFAULT_TEMPERATURE_GRID: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// One model under evaluation: where it is served and how to address it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Display label, unique within a campaign.
    pub name: String,
    /// HTTP base URL of the serving endpoint.
    pub endpoint: String,
    /// Model identifier sent on the wire.
    pub served_model_id: String,
    /// Overrides the uniform system prompt when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_prompt: Option<String>,
}

impl ModelSpec {
    pub fn effective_system_prompt(&self) -> &str {
        self.system_prompt.as_deref().unwrap_or(DEFAULT_SYSTEM_PROMPT)
    }
}

/// Generation settings shared by every cell of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationSettings {
    /// Sampling temperature for single-point runs; sweeps override per cell.
    pub temperature: f64,
    pub min_p: f64,
    pub max_new_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<i64>,
    /// Bound on in-flight requests per endpoint.
    pub concurrency: usize,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        GenerationSettings {
            temperature: 0.5,
            min_p: 0.1,
            max_new_tokens: 600,
            seed: Some(123),
            concurrency: 1,
        }
    }
}

/// Campaign configuration as read from a config file.
#[derive(Debug, Clone, Deserialize)]
pub struct CampaignConfig {
    /// Battery file path; the embedded canonical battery when absent.
    #[serde(default)]
    pub battery: Option<String>,
    /// Prompt ids to include; the whole battery when absent.
    #[serde(default)]
    pub prompts: Option<Vec<String>>,
    /// Temperature grid; the default 10-point grid when absent.
    #[serde(default)]
    pub temperatures: Option<Vec<f64>>,
    #[serde(default = "default_runs")]
    pub runs: u32,
    #[serde(default)]
    pub settings: GenerationSettings,
    pub models: Vec<ModelSpec>,
}

fn default_runs() -> u32 {
    1
}

/// Unique key of one generation: (model, prompt, temperature, run).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordKey {
    pub model: String,
    pub prompt_id: String,
    pub temperature: f64,
    pub run: u32,
}

impl RecordKey {
    /// Hashable form with the temperature in integer milli-units.
    pub fn cell(&self) -> CellKey {
        CellKey {
            model: self.model.clone(),
            prompt_id: self.prompt_id.clone(),
            temp_milli: temp_milli(self.temperature),
            run: self.run,
        }
    }
}

/// Temperature in thousandths, the exact-comparison form used for keys.
pub fn temp_milli(temperature: f64) -> u32 {
    (temperature * 1000.0).round() as u32
}

/// Exact-equality key for store lookups and resume checks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub model: String,
    pub prompt_id: String,
    pub temp_milli: u32,
    pub run: u32,
}

/// One persisted generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    #[serde(flatten)]
    pub key: RecordKey,
    pub text: String,
    pub words: u32,
    pub fingerprint: String,
    pub created_at: String,
}

impl ResponseRecord {
    pub fn new(key: RecordKey, text: String) -> ResponseRecord {
        let words = word_count(&text);
        let fingerprint = fingerprint(&text);
        let created_at = chrono::Utc::now().to_rfc3339();
        ResponseRecord {
            key,
            text,
            words,
            fingerprint,
            created_at,
        }
    }
}

/// Number of maximal whitespace-free substrings.
pub fn word_count(text: &str) -> u32 {
    text.split_whitespace().count() as u32
}

/// SHA-256 of the raw text bytes, lowercase hex.
pub fn fingerprint(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// One planned generation cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanCell {
    pub model: String,
    pub prompt_id: String,
    pub temperature: f64,
    pub run: u32,
}

impl PlanCell {
    pub fn key(&self) -> RecordKey {
        RecordKey {
            model: self.model.clone(),
            prompt_id: self.prompt_id.clone(),
            temperature: self.temperature,
            run: self.run,
        }
    }
}

/// A fully enumerated campaign.
#[derive(Debug, Clone)]
pub struct CampaignPlan {
    pub models: Vec<ModelSpec>,
    pub prompt_ids: Vec<String>,
    pub temperatures: Vec<f64>,
    pub runs: u32,
    pub settings: GenerationSettings,
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("campaign has no models")]
    NoModels,
    #[error("duplicate model name {0:?}")]
    DuplicateModel(String),
    #[error("unknown prompt id {0:?}")]
    UnknownPrompt(String),
    #[error("empty temperature grid")]
    EmptyTemperatures,
    #[error("temperature must be > 0, got {0}")]
    BadTemperature(f64),
    #[error("runs must be >= 1")]
    BadRuns,
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Enumerate every cell of a campaign exactly once, in deterministic order:
/// model, then prompt ordinal, then temperature ascending, then run.
pub fn plan(config: &CampaignConfig, battery: &Battery) -> Result<CampaignPlan, CampaignError> {
    if config.models.is_empty() {
        return Err(CampaignError::NoModels);
    }
    let mut names = HashSet::new();
    for m in &config.models {
        if !names.insert(m.name.as_str()) {
            return Err(CampaignError::DuplicateModel(m.name.clone()));
        }
    }

    let prompt_ids: Vec<String> = match &config.prompts {
        Some(ids) => {
            for id in ids {
                if battery.get(id).is_none() {
                    return Err(CampaignError::UnknownPrompt(id.clone()));
                }
            }
            // Keep battery ordinal order regardless of config order.
            battery
                .prompts()
                .iter()
                .filter(|p| ids.contains(&p.id))
                .map(|p| p.id.clone())
                .collect()
        }
        None => battery.prompts().iter().map(|p| p.id.clone()).collect(),
    };

    let mut temperatures = config
        .temperatures
        .clone()
        .unwrap_or_else(|| DEFAULT_TEMPERATURE_GRID.to_vec());
    if temperatures.is_empty() {
        return Err(CampaignError::EmptyTemperatures);
    }
    for &t in &temperatures {
        if t <= 0.0 || !t.is_finite() {
            return Err(CampaignError::BadTemperature(t));
        }
    }
    temperatures.sort_by(|a, b| a.partial_cmp(b).expect("finite temperatures"));
    temperatures.dedup_by_key(|t| temp_milli(*t));

    if config.runs < 1 {
        return Err(CampaignError::BadRuns);
    }

    Ok(CampaignPlan {
        models: config.models.clone(),
        prompt_ids,
        temperatures,
        runs: config.runs,
        settings: config.settings.clone(),
    })
}

impl CampaignPlan {
    /// Total planned cell count: |models| x |prompts| x |temperatures| x runs.
    pub fn cell_count(&self) -> usize {
        self.models.len() * self.prompt_ids.len() * self.temperatures.len() * self.runs as usize
    }

    /// All cells in deterministic order.
    pub fn cells(&self) -> Vec<PlanCell> {
        let mut out = Vec::with_capacity(self.cell_count());
        for model in &self.models {
            for prompt_id in &self.prompt_ids {
                for &temperature in &self.temperatures {
                    for run in 1..=self.runs {
                        out.push(PlanCell {
                            model: model.name.clone(),
                            prompt_id: prompt_id.clone(),
                            temperature,
                            run,
                        });
                    }
                }
            }
        }
        out
    }

    fn model(&self, name: &str) -> &ModelSpec {
        self.models
            .iter()
            .find(|m| m.name == name)
            .expect("cells only reference plan models")
    }
}

/// Outcome counts of one [`execute`] call.
///
/// `attempted = completed + failed` and `skipped = plan cells - attempted`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExecutionSummary {
    pub attempted: usize,
    pub completed: usize,
    pub skipped: usize,
    pub failed: usize,
    pub failures: Vec<FailureEntry>,
    /// Endpoints that rejected the min_p extension field.
    pub degraded_endpoints: Vec<String>,
}

const MAX_ATTEMPTS: u32 = 3;
const RETRY_BASE_MS: u64 = 50;

/// Execute every plan cell not already present in the store.
///
/// Each outbound request carries exactly two messages: the model's system
/// prompt and the user prompt text. Failures are tolerated per cell; the
/// campaign continues and the failure is recorded in the manifest.
pub fn execute(
    plan: &CampaignPlan,
    battery: &Battery,
    store: &mut ResponseStore,
    client: &dyn ChatClient,
) -> Result<ExecutionSummary, CampaignError> {
    let cells = plan.cells();
    let mut pending: Vec<PlanCell> = Vec::new();
    let mut skipped = 0usize;
    for cell in cells {
        if store.contains(&cell.key().cell()) {
            skipped += 1;
        } else {
            pending.push(cell);
        }
    }

    // Group pending cells per endpoint, preserving plan order within each.
    let mut by_endpoint: BTreeMap<String, VecDeque<PlanCell>> = BTreeMap::new();
    for cell in pending {
        let endpoint = plan.model(&cell.model).endpoint.clone();
        by_endpoint.entry(endpoint).or_default().push_back(cell);
    }
    let queues: Vec<(String, Mutex<VecDeque<PlanCell>>)> = by_endpoint
        .into_iter()
        .map(|(endpoint, q)| (endpoint, Mutex::new(q)))
        .collect();

    struct CellOutcome {
        cell: PlanCell,
        result: Result<String, String>,
        attempts: u32,
        min_p_rejected: bool,
    }

    let concurrency = plan.settings.concurrency.max(1);
    let (tx, rx) = mpsc::channel::<CellOutcome>();
    let mut summary = ExecutionSummary {
        skipped,
        ..Default::default()
    };
    let mut degraded: HashSet<String> = HashSet::new();

    std::thread::scope(|scope| {
        for (endpoint, queue) in &queues {
            for _ in 0..concurrency {
                let tx = tx.clone();
                let endpoint = endpoint.clone();
                scope.spawn(move || loop {
                    let cell = match queue.lock().expect("queue lock").pop_front() {
                        Some(c) => c,
                        None => break,
                    };
                    let model = plan.model(&cell.model);
                    let prompt = battery.get(&cell.prompt_id).expect("plan validated prompts");
                    let mut request = ChatRequest {
                        model: model.served_model_id.clone(),
                        messages: vec![
                            Message {
                                role: "system".into(),
                                content: model.effective_system_prompt().to_string(),
                            },
                            Message {
                                role: "user".into(),
                                content: prompt.text.clone(),
                            },
                        ],
                        temperature: cell.temperature,
                        max_tokens: plan.settings.max_new_tokens,
                        seed: plan.settings.seed,
                        min_p: Some(plan.settings.min_p),
                    };

                    let mut attempts = 0u32;
                    let mut min_p_rejected = false;
                    let result = loop {
                        attempts += 1;
                        match client.complete(&endpoint, &request) {
                            Ok(text) => break Ok(strip_chat_markup(&text).to_string()),
                            Err(err) => {
                                if err.is_min_p_rejection() && request.min_p.is_some() {
                                    // Protocol capability degradation: drop the
                                    // extension field and retry immediately.
                                    request.min_p = None;
                                    min_p_rejected = true;
                                    attempts -= 1;
                                    continue;
                                }
                                if attempts >= MAX_ATTEMPTS {
                                    break Err(err.to_string());
                                }
                                std::thread::sleep(std::time::Duration::from_millis(
                                    RETRY_BASE_MS << (attempts - 1),
                                ));
                            }
                        }
                    };
                    let _ = tx.send(CellOutcome {
                        cell,
                        result,
                        attempts,
                        min_p_rejected,
                    });
                });
            }
        }
        drop(tx);

        // Single-writer append point: all worker results funnel through here.
        for outcome in rx {
            summary.attempted += 1;
            if outcome.min_p_rejected {
                let endpoint = plan.model(&outcome.cell.model).endpoint.clone();
                degraded.insert(endpoint);
            }
            match outcome.result {
                Ok(text) => {
                    let record = ResponseRecord::new(outcome.cell.key(), text);
                    match store.append(record) {
                        Ok(()) => summary.completed += 1,
                        Err(e) => {
                            summary.failed += 1;
                            summary.failures.push(FailureEntry {
                                model: outcome.cell.model.clone(),
                                prompt_id: outcome.cell.prompt_id.clone(),
                                temperature: outcome.cell.temperature,
                                run: outcome.cell.run,
                                attempts: outcome.attempts,
                                error: e.to_string(),
                            });
                        }
                    }
                }
                Err(error) => {
                    summary.failed += 1;
                    summary.failures.push(FailureEntry {
                        model: outcome.cell.model.clone(),
                        prompt_id: outcome.cell.prompt_id.clone(),
                        temperature: outcome.cell.temperature,
                        run: outcome.cell.run,
                        attempts: outcome.attempts,
                        error,
                    });
                }
            }
        }
    });

    summary.failures.sort_by(|a, b| {
        (&a.model, &a.prompt_id, temp_milli(a.temperature), a.run).cmp(&(
            &b.model,
            &b.prompt_id,
            temp_milli(b.temperature),
            b.run,
        ))
    });
    summary.degraded_endpoints = {
        let mut v: Vec<String> = degraded.into_iter().collect();
        v.sort();
        v
    };

    let manifest = CampaignManifest::from_run(plan, &summary);
    store.write_manifest(&manifest)?;

    Ok(summary)
}
