use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde_json::{json, Value};

use super::{AnnotatorError, AnnotatorRequest};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientError {
    /// Worth retrying: connection problems, rate limits, server errors.
    Transient(String),
    /// The endpoint answered but the body could not be understood.
    Malformed(String),
    /// The request itself was refused; retrying will not help.
    Rejected(String),
}

/// Anything that can answer an annotation request with the model's reply text.
pub trait AnnotatorClient {
    fn complete(&self, request: &AnnotatorRequest) -> Result<String, ClientError>;
}

fn data_url(img: &crate::imaging::ImageBuf) -> Result<String, ClientError> {
    let png = img
        .encode_png()
        .map_err(|e| ClientError::Rejected(format!("cannot encode image: {e}")))?;
    Ok(format!("data:image/png;base64,{}", STANDARD.encode(png)))
}

/// Chat-completions request body: one user turn carrying the query text
/// followed by the tampered image and the fused-mask image.
pub fn chat_request_body(request: &AnnotatorRequest) -> Result<Value, ClientError> {
    let mut content = vec![json!({"type": "text", "text": request.query})];
    for img in &request.images {
        content.push(json!({"type": "image_url", "image_url": {"url": data_url(img)?}}));
    }
    Ok(json!({
        "model": request.model_id,
        "temperature": request.temperature,
        "messages": [{"role": "user", "content": content}],
    }))
}

/// Extracts `choices[0].message.content`, accepting either a string or a list of text parts.
pub fn content_from_body(body: &Value) -> Result<String, ClientError> {
    let content = body
        .pointer("/choices/0/message/content")
        .ok_or_else(|| ClientError::Malformed("missing choices[0].message.content".into()))?;
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => {
            let text: Vec<&str> = parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect();
            if text.is_empty() {
                Err(ClientError::Malformed("content has no text parts".into()))
            } else {
                Ok(text.concat())
            }
        }
        _ => Err(ClientError::Malformed("content is neither string nor parts".into())),
    }
}

#[derive(Debug, Clone)]
pub struct HttpClientConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

/// Blocking client for an OpenAI-compatible `/chat/completions` endpoint.
pub struct HttpClient {
    agent: ureq::Agent,
    config: HttpClientConfig,
}

impl std::fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpClient")
            .field("base_url", &self.config.base_url)
            .field("has_api_key", &self.config.api_key.is_some())
            .finish()
    }
}

impl HttpClient {
    pub fn new(config: HttpClientConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, config }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

impl AnnotatorClient for HttpClient {
    fn complete(&self, request: &AnnotatorRequest) -> Result<String, ClientError> {
        let body = chat_request_body(request)?;
        let mut req = self.agent.post(self.endpoint()).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| ClientError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ClientError::Transient(e.to_string()))?;
        match status {
            200..=299 => {
                let v: Value = serde_json::from_str(&text).map_err(|e| ClientError::Malformed(e.to_string()))?;
                content_from_body(&v)
            }
            408 | 429 | 500..=599 => Err(ClientError::Transient(format!("HTTP {status}"))),
            _ => Err(ClientError::Rejected(format!("HTTP {status}: {}", truncate(&text, 200)))),
        }
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Offline client answering from recorded response bodies keyed by
/// [`AnnotatorRequest::content_hash`].
#[derive(Debug, Clone, Default)]
pub struct MockClient {
    bodies: HashMap<String, Value>,
}

impl MockClient {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads every `*.json` file in `dir`; each holds an object `{hash: response body}`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, AnnotatorError> {
        let dir = dir.as_ref();
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| AnnotatorError::MalformedResponse(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        paths.sort();
        let mut mock = Self::new();
        for p in paths {
            let text = std::fs::read_to_string(&p)
                .map_err(|e| AnnotatorError::MalformedResponse(format!("{}: {e}", p.display())))?;
            let map: HashMap<String, Value> = serde_json::from_str(&text)
                .map_err(|e| AnnotatorError::MalformedResponse(format!("{}: {e}", p.display())))?;
            mock.bodies.extend(map);
        }
        Ok(mock)
    }

    pub fn insert(&mut self, hash: impl Into<String>, body: Value) {
        self.bodies.insert(hash.into(), body);
    }

    /// Wraps reply text in a minimal chat-completions body.
    pub fn body_for(text: &str) -> Value {
        json!({
            "object": "chat.completion",
            "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
        })
    }

    pub fn len(&self) -> usize {
        self.bodies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bodies.is_empty()
    }

    /// Writes all bodies to one fixture file.
    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let v = serde_json::to_value(&self.bodies).map_err(std::io::Error::other)?;
        let text = crate::json::to_canonical_pretty(&v).map_err(std::io::Error::other)?;
        std::fs::write(path, text)
    }
}

impl AnnotatorClient for MockClient {
    fn complete(&self, request: &AnnotatorRequest) -> Result<String, ClientError> {
        let hash = request.content_hash();
        let body = self
            .bodies
            .get(&hash)
            .ok_or_else(|| ClientError::Rejected(format!("no fixture for request {hash}")))?;
        content_from_body(body)
    }
}
