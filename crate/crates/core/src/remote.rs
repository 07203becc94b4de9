//! HTTP-backed embedding provider and chat-completion backend.
//!
//! Both speak the widely used OpenAI-style JSON shapes: embeddings are
//! requested as `{"model", "input"}` and read from `data[0].embedding`;
//! chat completions send one user message and read
//! `choices[0].message.content`. The API key comes from `RELMATCH_API_KEY`.

use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use crate::classifier::{Backend, BackendError};
use crate::embedding::{EmbedError, EmbeddingProvider};
use crate::model::Provenance;
use crate::prompt::{BackendResponse, ClassificationRequest};

pub const API_KEY_ENV: &str = "RELMATCH_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl RemoteConfig {
    pub fn from_env(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            timeout: Duration::from_secs(60),
        }
    }
}

enum CallError {
    Transport(String),
    Fatal(String),
}

fn post_json(client: &Client, config: &RemoteConfig, body: &Value) -> Result<Value, CallError> {
    let key = config
        .api_key
        .as_ref()
        .ok_or_else(|| CallError::Fatal(format!("{API_KEY_ENV} is not set")))?;
    let response = client
        .post(&config.endpoint)
        .bearer_auth(key)
        .json(body)
        .send()
        .map_err(|e| CallError::Transport(e.to_string()))?;
    let status = response.status();
    if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
        return Err(CallError::Transport(format!("HTTP {status}")));
    }
    if !status.is_success() {
        let text = response.text().unwrap_or_default();
        return Err(CallError::Fatal(format!("HTTP {status}: {text}")));
    }
    response
        .json::<Value>()
        .map_err(|e| CallError::Transport(format!("unreadable response body: {e}")))
}

fn client(config: &RemoteConfig) -> Client {
    Client::builder()
        .timeout(config.timeout)
        .build()
        .expect("http client builds")
}

pub struct RemoteEmbedder {
    config: RemoteConfig,
    dimension: usize,
    client: Client,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteConfig, dimension: usize) -> Self {
        let client = client(&config);
        Self {
            config,
            dimension,
            client,
        }
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn id(&self) -> String {
        format!("remote/{}/dim={}", self.config.model, self.dimension)
    }

    fn model(&self) -> String {
        self.config.model.clone()
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        let body = json!({ "model": self.config.model, "input": text });
        let value = post_json(&self.client, &self.config, &body).map_err(|e| match e {
            CallError::Transport(m) | CallError::Fatal(m) => EmbedError::ProviderUnavailable(m),
        })?;
        parse_embedding(&value)
            .ok_or_else(|| EmbedError::ProviderUnavailable("response has no data[0].embedding".into()))
    }
}

fn parse_embedding(value: &Value) -> Option<Vec<f32>> {
    value
        .get("data")?
        .get(0)?
        .get("embedding")?
        .as_array()?
        .iter()
        .map(|v| v.as_f64().map(|f| f as f32))
        .collect()
}

fn parse_chat_content(value: &Value) -> Option<String> {
    value
        .get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()
        .map(str::to_string)
}

pub struct RemoteChatBackend {
    config: RemoteConfig,
    client: Client,
}

impl RemoteChatBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let client = client(&config);
        Self { config, client }
    }
}

impl Backend for RemoteChatBackend {
    fn model_hint(&self) -> String {
        self.config.model.clone()
    }

    fn complete(&self, request: &ClassificationRequest) -> Result<BackendResponse, BackendError> {
        let body = json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [{ "role": "user", "content": request.prompt }],
        });
        let value = post_json(&self.client, &self.config, &body).map_err(|e| match e {
            CallError::Transport(m) => BackendError::Transport(m),
            CallError::Fatal(m) => BackendError::Fatal(m),
        })?;
        let raw_text = parse_chat_content(&value)
            .filter(|t| !t.is_empty())
            .ok_or_else(|| BackendError::Fatal("response has no choices[0].message.content".into()))?;
        Ok(BackendResponse {
            raw_text,
            provenance: Provenance::RemoteModel(self.config.model.clone()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn response_shapes() {
        let emb = json!({"data": [{"embedding": [0.5, -1.0, 2]}]});
        assert_eq!(parse_embedding(&emb), Some(vec![0.5, -1.0, 2.0]));
        assert_eq!(parse_embedding(&json!({"data": []})), None);
        let chat = json!({"choices": [{"message": {"role": "assistant", "content": "VERDICTS:\ne1: NO"}}]});
        assert_eq!(parse_chat_content(&chat).as_deref(), Some("VERDICTS:\ne1: NO"));
    }

    #[test]
    fn missing_key_is_fatal_without_network() {
        let config = RemoteConfig {
            endpoint: "http://127.0.0.1:9/v1/chat/completions".into(),
            model: "gpt-4".into(),
            api_key: None,
            timeout: Duration::from_millis(100),
        };
        let backend = RemoteChatBackend::new(config);
        let request = ClassificationRequest {
            prompt: "p".into(),
            source_id: "s".into(),
            relation_id: "r".into(),
            candidate_ids: vec!["t".into()],
            model_hint: "gpt-4".into(),
        };
        assert!(matches!(backend.complete(&request), Err(BackendError::Fatal(_))));
    }

    #[test]
    fn unreachable_endpoint_is_a_transport_failure() {
        let config = RemoteConfig {
            endpoint: "http://127.0.0.1:9/v1/embeddings".into(),
            model: "text-embedding-ada-002".into(),
            api_key: Some("k".into()),
            timeout: Duration::from_millis(200),
        };
        let embedder = RemoteEmbedder::new(config, 4);
        assert!(matches!(
            embedder.embed_raw("x"),
            Err(EmbedError::ProviderUnavailable(_))
        ));
    }
}
