//! OpenAI-compatible chat-completions client.
//!
//! Requests POST to `<endpoint>/v1/chat/completions` with `model`,
//! `messages`, `temperature`, `max_tokens`, `seed`, and the `min_p`
//! extension field; the assistant text is read from
//! `choices[0].message.content`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One chat message on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

/// A chat-completion request body.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_p: Option<f64>,
}

#[derive(Debug, Error)]
pub enum ChatResponseError {
    #[error("endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("http {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed completion payload: {0}")]
    MalformedPayload(String),
}

impl ChatResponseError {
    /// True when a 4xx response names the min_p extension field, meaning the
    /// server does not accept it.
    pub fn is_min_p_rejection(&self) -> bool {
        matches!(self, ChatResponseError::Status { status, body }
            if (400..500).contains(status) && body.contains("min_p"))
    }
}

/// Anything that can serve a chat completion for a request.
pub trait ChatClient: Send + Sync {
    fn complete(&self, endpoint: &str, request: &ChatRequest) -> Result<String, ChatResponseError>;
}

#[derive(Deserialize)]
struct CompletionChoiceMessage {
    content: String,
}

#[derive(Deserialize)]
struct CompletionChoice {
    message: CompletionChoiceMessage,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

/// Blocking HTTP client for real endpoints.
pub struct HttpChatClient {
    agent: ureq::Agent,
}

impl HttpChatClient {
    pub fn new() -> HttpChatClient {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(std::time::Duration::from_secs(600)))
            .build();
        HttpChatClient {
            agent: ureq::Agent::new_with_config(config),
        }
    }
}

impl Default for HttpChatClient {
    fn default() -> Self {
        Self::new()
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, endpoint: &str, request: &ChatRequest) -> Result<String, ChatResponseError> {
        let url = format!("{}/v1/chat/completions", endpoint.trim_end_matches('/'));
        let mut response = self
            .agent
            .post(&url)
            .send_json(request)
            .map_err(|e| ChatResponseError::Unreachable(e.to_string()))?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            let body = response
                .body_mut()
                .read_to_string()
                .unwrap_or_default();
            return Err(ChatResponseError::Status { status, body });
        }
        let payload: CompletionResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| ChatResponseError::MalformedPayload(e.to_string()))?;
        let choice = payload
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| ChatResponseError::MalformedPayload("empty choices".into()))?;
        Ok(choice.message.content)
    }
}
