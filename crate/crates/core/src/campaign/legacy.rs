//! Ingestion of the legacy CSV response format and chat-template cleanup.
//!
//! The legacy format has header columns `prompt,model,response` and omits
//! temperature and run, which the caller supplies. Prompts are matched back
//! to battery ids by exact text equality after whitespace normalization.

use std::path::Path;

use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use crate::battery::Battery;

use super::{RecordKey, ResponseRecord};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read csv {path}: {source}")]
    Io {
        path: String,
        source: csv::Error,
    },
    #[error("missing column {0:?}")]
    MissingColumn(&'static str),
    #[error("row {row}: prompt text matches no battery prompt")]
    UnmatchedPrompt { row: usize },
    #[error("row {row}: {source}")]
    BadRow { row: usize, source: csv::Error },
}

/// Ingest one legacy CSV file into response records.
///
/// `model_name`, `temperature`, and `run` come from the caller since the
/// legacy format does not carry them. Records are returned in row order;
/// appending them to a store enforces key uniqueness.
pub fn ingest_legacy_csv(
    path: impl AsRef<Path>,
    battery: &Battery,
    model_name: &str,
    temperature: f64,
    run: u32,
) -> Result<Vec<ResponseRecord>, IngestError> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;

    let headers = reader
        .headers()
        .map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?
        .clone();
    let col = |name: &'static str| -> Result<usize, IngestError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or(IngestError::MissingColumn(name))
    };
    let prompt_col = col("prompt")?;
    col("model")?;
    let response_col = col("response")?;

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_number = i + 1;
        let row = row.map_err(|source| IngestError::BadRow {
            row: row_number,
            source,
        })?;
        let prompt_text = row.get(prompt_col).unwrap_or("");
        let response = row.get(response_col).unwrap_or("");
        let prompt = battery
            .match_text(prompt_text)
            .ok_or(IngestError::UnmatchedPrompt { row: row_number })?;
        records.push(ResponseRecord::new(
            RecordKey {
                model: model_name.to_string(),
                prompt_id: prompt.id.clone(),
                temperature,
                run,
            },
            response.to_string(),
        ));
    }
    Ok(records)
}

static ASSISTANT_SEGMENT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?s)<\|start_header_id\|>assistant<\|end_header_id\|>(.*?)<\|eot_id\|>")
        .expect("static regex")
});

/// Strip chat-template markup from wire text.
///
/// When one or more assistant segments are present, the last one is
/// returned trimmed; otherwise the input passes through unchanged (modern
/// endpoints already return clean text).
pub fn strip_chat_markup(raw: &str) -> &str {
    ASSISTANT_SEGMENT
        .captures_iter(raw)
        .last()
        .map(|caps| caps.get(1).expect("capture group 1").as_str().trim())
        .unwrap_or(raw)
}
