//! Blocking client for an OpenAI-compatible chat-completions endpoint.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::backend::{BackendError, BackendErrorKind, LlmBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpBackendConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token. Never the token itself.
    pub api_key_env: String,
    pub timeout_secs: u64,
    /// `None` leaves sampling to the server default.
    pub temperature: Option<f64>,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".to_string(),
            model: "gpt-4o".to_string(),
            api_key_env: "TRIAGE_LLM_API_KEY".to_string(),
            timeout_secs: 120,
            temperature: Some(0.0),
        }
    }
}

pub struct HttpBackend {
    id: String,
    config: HttpBackendConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    /// Reads the credential from the configured environment variable. A
    /// missing variable means requests go out unauthenticated.
    pub fn new(config: HttpBackendConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty());
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            id: format!("http:{}", config.model),
            config,
            api_key,
            agent,
        }
    }

    pub fn config(&self) -> &HttpBackendConfig {
        &self.config
    }

    pub fn request_body(&self, system: &str, user: &str) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        if let Some(t) = self.config.temperature {
            body["temperature"] = json!(t);
        }
        body
    }
}

impl LlmBackend for HttpBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn complete(&self, system: &str, user: &str) -> Result<String, BackendError> {
        let mut request = self
            .agent
            .post(&self.config.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(self.request_body(system, user))
            .map_err(map_error)?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(map_error)?;
        if !(200..300).contains(&status) {
            return Err(BackendError::new(
                BackendErrorKind::Status(status),
                crate::text::excerpt(&text, 200),
            ));
        }
        completion_text(&text)
    }
}

fn map_error(err: ureq::Error) -> BackendError {
    match err {
        ureq::Error::Timeout(_) => BackendError::timeout(err.to_string()),
        ureq::Error::StatusCode(code) => {
            BackendError::new(BackendErrorKind::Status(code), "status error")
        }
        other => BackendError::transport(other.to_string()),
    }
}

/// Pull `choices[0].message.content` out of a chat-completions reply.
pub fn completion_text(body: &str) -> Result<String, BackendError> {
    let value: Value = serde_json::from_str(body).map_err(|e| {
        BackendError::new(BackendErrorKind::InvalidResponse, format!("not JSON: {e}"))
    })?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| {
            BackendError::new(
                BackendErrorKind::InvalidResponse,
                "reply has no choices[0].message.content",
            )
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_shape() {
        let backend = HttpBackend::new(HttpBackendConfig::default());
        let body = backend.request_body("sys", "usr");
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "usr");
        assert_eq!(body["temperature"], 0.0);

        let backend = HttpBackend::new(HttpBackendConfig {
            temperature: None,
            ..Default::default()
        });
        assert!(backend.request_body("s", "u").get("temperature").is_none());
    }

    #[test]
    fn extracts_content() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"Maybe"}}]}"#;
        assert_eq!(completion_text(body).unwrap(), "Maybe");
        assert_eq!(
            completion_text("{}").unwrap_err().kind,
            BackendErrorKind::InvalidResponse
        );
        assert!(completion_text("<html>").is_err());
    }

    #[test]
    fn unreachable_endpoint_is_retriable() {
        let backend = HttpBackend::new(HttpBackendConfig {
            endpoint: "http://127.0.0.1:9/v1/chat/completions".to_string(),
            timeout_secs: 2,
            ..Default::default()
        });
        let err = backend.complete("s", "u").unwrap_err();
        assert!(err.is_retriable(), "{err}");
    }
}
