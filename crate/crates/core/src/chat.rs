//! Minimal chat-completion client shared by LLM shoppers, LLM policies and
//! LLM error classifiers.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: "assistant".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChatError {
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("backend rejected the request: {0}")]
    Rejected(String),
    #[error("malformed completion: {0}")]
    Malformed(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: usize, last: String },
    #[error("invalid chat configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: usize,
    pub backoff_ms: u64,
    pub temperature: f64,
}

impl Default for ChatConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: "default".into(),
            api_key: None,
            timeout_secs: 60,
            max_retries: 3,
            backoff_ms: 500,
            temperature: 0.7,
        }
    }
}

impl ChatConfig {
    /// Reads a TOML config file, then applies `{prefix}_BASE_URL`,
    /// `_MODEL`, `_API_KEY`, `_TIMEOUT_SECS` and `_MAX_RETRIES`.
    pub fn load(path: Option<&Path>, env_prefix: &str) -> Result<Self, ChatError> {
        let mut config = match path {
            Some(p) => {
                let raw = std::fs::read_to_string(p)
                    .map_err(|e| ChatError::Config(format!("{}: {e}", p.display())))?;
                toml::from_str(&raw).map_err(|e| ChatError::Config(format!("{}: {e}", p.display())))?
            }
            None => ChatConfig::default(),
        };
        config.apply_env(env_prefix, |k| std::env::var(k).ok())?;
        Ok(config)
    }

    pub fn apply_env(&mut self, prefix: &str, get: impl Fn(&str) -> Option<String>) -> Result<(), ChatError> {
        let key = |name: &str| format!("{prefix}_{name}");
        if let Some(v) = get(&key("BASE_URL")) {
            self.base_url = v;
        }
        if let Some(v) = get(&key("MODEL")) {
            self.model = v;
        }
        if let Some(v) = get(&key("API_KEY")) {
            self.api_key = Some(v);
        }
        if let Some(v) = get(&key("TIMEOUT_SECS")) {
            self.timeout_secs = v.parse().map_err(|_| ChatError::Config(format!("bad timeout {v:?}")))?;
        }
        if let Some(v) = get(&key("MAX_RETRIES")) {
            self.max_retries = v.parse().map_err(|_| ChatError::Config(format!("bad retry count {v:?}")))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

/// One round trip to a chat backend. Implementations classify failures so
/// the client knows which ones to retry.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError>;
}

/// OpenAI-style `POST {base_url}/chat/completions`.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(config: &ChatConfig) -> Result<Self, ChatError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ChatError::Config(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: format!("{}/chat/completions", config.base_url.trim_end_matches('/')),
            api_key: config.api_key.clone(),
        })
    }
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

impl ChatTransport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError> {
        let mut builder = self.client.post(&self.endpoint).json(request);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| ChatError::Transient(e.to_string()))?;
        let status = response.status();
        let body = response.text().map_err(|e| ChatError::Transient(e.to_string()))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(ChatError::Transient(format!("{status}: {body}")));
        }
        if !status.is_success() {
            return Err(ChatError::Rejected(format!("{status}: {body}")));
        }
        let parsed: CompletionBody =
            serde_json::from_str(&body).map_err(|e| ChatError::Malformed(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ChatError::Malformed("no choices".into()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub content: String,
    pub attempts: usize,
}

/// Retrying client. Transient failures back off exponentially up to
/// `max_retries` extra attempts; empty completions are errors.
#[derive(Clone)]
pub struct ChatClient {
    transport: Arc<dyn ChatTransport>,
    config: ChatConfig,
}

impl ChatClient {
    pub fn new(transport: Arc<dyn ChatTransport>, config: ChatConfig) -> Self {
        Self { transport, config }
    }

    pub fn http(config: ChatConfig) -> Result<Self, ChatError> {
        let transport = HttpTransport::new(&config)?;
        Ok(Self::new(Arc::new(transport), config))
    }

    pub fn model(&self) -> &str {
        &self.config.model
    }

    pub fn complete(&self, messages: &[ChatMessage]) -> Result<Completion, ChatError> {
        let request = ChatRequest {
            model: self.config.model.clone(),
            messages: messages.to_vec(),
            temperature: self.config.temperature,
        };
        let total = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 1..=total {
            match self.transport.complete(&request) {
                Ok(content) if content.trim().is_empty() => {
                    return Err(ChatError::Malformed("empty completion".into()));
                }
                Ok(content) => {
                    tracing::debug!(attempt, model = %self.config.model, "chat completion");
                    return Ok(Completion { content, attempts: attempt });
                }
                Err(ChatError::Transient(msg)) => {
                    tracing::warn!(attempt, error = %msg, "transient chat failure");
                    last = msg;
                    if attempt < total {
                        let wait = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(6));
                        std::thread::sleep(Duration::from_millis(wait));
                    }
                }
                Err(other) => return Err(other),
            }
        }
        Err(ChatError::Exhausted { attempts: total, last })
    }
}


#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;

    #[test]
    fn retries_transient_failures() {
        let t = ScriptedTransport::new(vec![
            Err(ChatError::Transient("502".into())),
            Err(ChatError::Transient("503".into())),
            Ok("hello".into()),
        ]);
        let client = ChatClient::new(t.clone(), fast_config());
        let out = client.complete(&[ChatMessage::user("hi")]).unwrap();
        assert_eq!(out, Completion { content: "hello".into(), attempts: 3 });
        assert_eq!(t.requests.lock().unwrap().len(), 3);
    }

    #[test]
    fn empty_completion_is_malformed() {
        let t = ScriptedTransport::new(vec![Ok("  ".into())]);
        let client = ChatClient::new(t, fast_config());
        assert!(matches!(client.complete(&[]), Err(ChatError::Malformed(_))));
    }

    #[test]
    fn gives_up_after_bounded_attempts() {
        let t = ScriptedTransport::new(vec![]);
        let client = ChatClient::new(t.clone(), ChatConfig { max_retries: 2, ..fast_config() });
        assert!(matches!(client.complete(&[]), Err(ChatError::Exhausted { attempts: 3, .. })));
        assert_eq!(t.requests.lock().unwrap().len(), 3);
    }

    #[test]
    fn rejection_is_not_retried() {
        let t = ScriptedTransport::new(vec![Err(ChatError::Rejected("401".into())), Ok("x".into())]);
        let client = ChatClient::new(t.clone(), fast_config());
        assert!(matches!(client.complete(&[]), Err(ChatError::Rejected(_))));
        assert_eq!(t.requests.lock().unwrap().len(), 1);
    }

    #[test]
    fn env_overrides_file_values() {
        let mut c = ChatConfig::default();
        c.apply_env("SHOPSIM_SHOPPER", |k| match k {
            "SHOPSIM_SHOPPER_MODEL" => Some("m2".into()),
            "SHOPSIM_SHOPPER_MAX_RETRIES" => Some("5".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!((c.model.as_str(), c.max_retries), ("m2", 5));
        assert!(c.apply_env("X", |_| Some("nope".into())).is_err());
    }
}
