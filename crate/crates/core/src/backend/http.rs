use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, BackendConfig, BackendError, CallError, CompletionRequest};

/// Chat-completion client: one POST per request with a `messages` array,
/// `temperature` and `max_tokens`, bearer token from the environment.
pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    api_key: String,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("endpoint", &self.endpoint)
            .finish_non_exhaustive()
    }
}

impl HttpBackend {
    /// Reads the credential named by `auth_ref`; fails before any network
    /// activity when it is absent.
    pub fn new(config: &BackendConfig) -> Result<Self, BackendError> {
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| BackendError::Config("http backend needs an endpoint".into()))?;
        let var = config
            .auth_ref
            .as_deref()
            .ok_or_else(|| BackendError::AuthError("no auth_ref configured".into()))?;
        let api_key = match std::env::var(var) {
            Ok(v) if !v.trim().is_empty() => v,
            _ => {
                return Err(BackendError::AuthError(format!(
                    "environment variable {var} is not set"
                )))
            }
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpBackend {
            agent,
            endpoint,
            api_key,
        })
    }
}

pub fn request_body(req: &CompletionRequest<'_>) -> Value {
    let mut messages = Vec::new();
    if let Some(system) = req.system {
        messages.push(json!({"role": "system", "content": system}));
    }
    messages.push(json!({"role": "user", "content": req.prompt}));
    json!({
        "model": req.model,
        "messages": messages,
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    })
}

fn provider_message(body: &str) -> String {
    serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| {
            v.pointer("/error/message")
                .and_then(Value::as_str)
                .map(String::from)
        })
        .unwrap_or_else(|| body.chars().take(500).collect())
}

impl Backend for HttpBackend {
    fn call(&self, req: &CompletionRequest<'_>) -> Result<String, CallError> {
        let result = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(request_body(req));
        let mut response = match result {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Err(CallError::Timeout),
            Err(e) => return Err(CallError::Transient(e.to_string())),
        };
        let status = response.status().as_u16();
        let body = match response.body_mut().read_to_string() {
            Ok(b) => b,
            Err(ureq::Error::Timeout(_)) => return Err(CallError::Timeout),
            Err(e) => return Err(CallError::Transient(e.to_string())),
        };
        match status {
            200..=299 => {
                let v: Value = serde_json::from_str(&body).map_err(|e| {
                    CallError::Fatal(BackendError::ProviderError {
                        status,
                        message: format!("malformed response body: {e}"),
                    })
                })?;
                v.pointer("/choices/0/message/content")
                    .and_then(Value::as_str)
                    .map(String::from)
                    .ok_or_else(|| {
                        CallError::Fatal(BackendError::ProviderError {
                            status,
                            message: "response has no choices[0].message.content".into(),
                        })
                    })
            }
            401 | 403 => Err(CallError::Fatal(BackendError::AuthError(format!(
                "provider returned {status}: {}",
                provider_message(&body)
            )))),
            408 | 429 | 500..=599 => Err(CallError::Transient(format!(
                "provider returned {status}: {}",
                provider_message(&body)
            ))),
            _ => Err(CallError::Fatal(BackendError::ProviderError {
                status,
                message: provider_message(&body),
            })),
        }
    }
}
