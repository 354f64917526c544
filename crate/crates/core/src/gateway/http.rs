//! HTTP JSON transport speaking the de facto open inference-server wire
//! shape: `POST {endpoint}{chat_path}` with a messages array, and
//! `POST {endpoint}{embed_path}` with an input list.

use super::{BackendConfig, ChatRequest, ChatTransport, EmbedTransport, TransportError};
use serde::Deserialize;

pub struct HttpTransport {
    agent: ureq::Agent,
    cfg: BackendConfig,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f64>,
}

impl HttpTransport {
    pub fn new(cfg: BackendConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.request_timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, cfg }
    }

    fn post_json(&self, path: &str, body: &serde_json::Value) -> Result<serde_json::Value, TransportError> {
        let url = format!("{}{}", self.cfg.endpoint.trim_end_matches('/'), path);
        let mut request = self.agent.post(&url);
        if let Some(token) = &self.cfg.auth_token {
            request = request.header("authorization", &format!("Bearer {token}"));
        }
        let mut response = request.send_json(body).map_err(classify_send_error)?;
        let status = response.status().as_u16();
        if status == 429 || (500..600).contains(&status) {
            return Err(TransportError::Retryable {
                kind: if status == 429 { "rate_limit" } else { "server_error" },
                message: format!("HTTP {status}"),
            });
        }
        if !(200..300).contains(&status) {
            let body = response.body_mut().read_to_string().unwrap_or_default();
            return Err(TransportError::Fatal {
                message: format!("HTTP {status}: {}", body.chars().take(300).collect::<String>()),
            });
        }
        response
            .body_mut()
            .read_json::<serde_json::Value>()
            .map_err(|e| TransportError::Fatal { message: format!("malformed JSON response: {e}") })
    }
}

fn classify_send_error(err: ureq::Error) -> TransportError {
    match err {
        ureq::Error::Timeout(_) => TransportError::Retryable {
            kind: "timeout",
            message: err_string(&err),
        },
        ureq::Error::Io(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => {
            TransportError::Retryable {
                kind: "transport",
                message: err_string(&err),
            }
        }
        other => TransportError::Fatal { message: err_string(&other) },
    }
}

fn err_string(err: &ureq::Error) -> String {
    err.to_string()
}

impl ChatTransport for HttpTransport {
    fn chat_once(&self, req: &ChatRequest) -> Result<String, TransportError> {
        let body = serde_json::json!({
            "model": req.model_id,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
            "temperature": req.decoding.temperature,
            "max_tokens": req.decoding.max_tokens,
        });
        let value = self.post_json(&self.cfg.chat_path, &body)?;
        let parsed: ChatResponse = serde_json::from_value(value)
            .map_err(|e| TransportError::Fatal { message: format!("unexpected chat response shape: {e}") })?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or(TransportError::Fatal { message: "chat response had no choices".into() })
    }
}

impl EmbedTransport for HttpTransport {
    fn embed_once(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, TransportError> {
        let body = serde_json::json!({
            "model": "embedding",
            "input": texts,
        });
        let value = self.post_json(&self.cfg.embed_path, &body)?;
        let parsed: EmbedResponse = serde_json::from_value(value)
            .map_err(|e| TransportError::Fatal { message: format!("unexpected embeddings response shape: {e}") })?;
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }
}
