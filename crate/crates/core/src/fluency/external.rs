use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Revision prompt with one worked exemplar; `<Text>` is replaced by the
/// caption.
pub const PROMPT_II: &str =
    "Revise the sentence to make it more correct and idiomatic:\nrain is falling on a tin roof ==> rain is falling on the tin roof\n<Text> ==>";

pub fn render_prompt(text: &str) -> String {
    PROMPT_II.replace("<Text>", text)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExternalConfig {
    pub endpoint: Option<String>,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: f64,
    pub retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_factor: f64,
}

impl Default for ExternalConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            model: "gpt-3.5-turbo".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 30.0,
            retries: 2,
            backoff_base_ms: 1000,
            backoff_factor: 2.0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExternalError {
    #[error("no corrector endpoint configured")]
    NoEndpoint,
    #[error("environment variable {0} is not set")]
    MissingKey(String),
    #[error("request timed out")]
    Timeout,
    #[error("HTTP error: {0}")]
    HttpError(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
}

impl ExternalError {
    fn retryable(&self) -> bool {
        match self {
            Self::Timeout => true,
            Self::HttpError(msg) => !msg.starts_with("status 4") || msg.starts_with("status 429"),
            _ => false,
        }
    }
}

pub fn request_body(model: &str, text: &str) -> Value {
    json!({
        "model": model,
        "messages": [{"role": "user", "content": render_prompt(text)}],
        "temperature": 0,
    })
}

/// First completion's content, trimmed of whitespace and surrounding quotes.
pub fn parse_completion(body: &str) -> Result<String, ExternalError> {
    let v: Value = serde_json::from_str(body).map_err(|e| ExternalError::MalformedResponse(e.to_string()))?;
    let content = v
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .ok_or_else(|| ExternalError::MalformedResponse("missing choices[0].message.content".into()))?;
    Ok(content
        .trim()
        .trim_matches(|c| c == '"' || c == '\'')
        .trim()
        .to_string())
}

/// Sends the revision prompt to a chat-completions endpoint, retrying
/// timeouts, transport failures, 429 and 5xx with exponential backoff.
pub fn correct_external(text: &str, cfg: &ExternalConfig) -> Result<String, ExternalError> {
    let endpoint = cfg.endpoint.as_deref().ok_or(ExternalError::NoEndpoint)?;
    let key = std::env::var(&cfg.api_key_env).map_err(|_| ExternalError::MissingKey(cfg.api_key_env.clone()))?;
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs_f64(cfg.timeout_secs))
        .build()
        .map_err(|e| ExternalError::HttpError(e.to_string()))?;
    let body = request_body(&cfg.model, text);
    let mut attempt = 0;
    loop {
        let result = send(&client, endpoint, &key, &body);
        match result {
            Err(e) if e.retryable() && attempt < cfg.retries => {
                let wait = cfg.backoff_base_ms as f64 * cfg.backoff_factor.powi(attempt as i32);
                log::warn!("corrector request failed ({e}); retrying in {wait:.0} ms");
                thread::sleep(Duration::from_millis(wait as u64));
                attempt += 1;
            }
            other => return other,
        }
    }
}

fn send(client: &reqwest::blocking::Client, endpoint: &str, key: &str, body: &Value) -> Result<String, ExternalError> {
    let resp = client.post(endpoint).bearer_auth(key).json(body).send().map_err(|e| {
        if e.is_timeout() {
            ExternalError::Timeout
        } else {
            ExternalError::HttpError(e.to_string())
        }
    })?;
    let status = resp.status();
    let text = resp.text().map_err(|e| {
        if e.is_timeout() {
            ExternalError::Timeout
        } else {
            ExternalError::HttpError(e.to_string())
        }
    })?;
    if !status.is_success() {
        return Err(ExternalError::HttpError(format!("status {}", status.as_u16())));
    }
    parse_completion(&text)
}
