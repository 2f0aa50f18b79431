use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, ChatRequest, LlmError, ProviderConfig};

/// OpenAI-style `POST {base_url}/chat/completions`.
pub struct HttpChat {
    agent: ureq::Agent,
    url: String,
    model: String,
    api_key: String,
    timeout: f64,
}

impl HttpChat {
    /// Reads the API key from `config.api_key_env`.
    pub fn new(config: &ProviderConfig) -> Result<Self, LlmError> {
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| LlmError::AuthMissing {
                var: config.api_key_env.clone(),
            })?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout)))
            .http_status_as_error(false)
            .build()
            .into();
        let base = config.base_url.as_deref().unwrap_or_default().trim_end_matches('/');
        Ok(Self {
            agent,
            url: format!("{base}/chat/completions"),
            model: config.model_name.clone().unwrap_or_default(),
            api_key,
            timeout: config.timeout,
        })
    }
}

fn excerpt(body: &str) -> String {
    const LIMIT: usize = 500;
    match body.char_indices().nth(LIMIT) {
        Some((i, _)) => format!("{}...", &body[..i]),
        None => body.to_string(),
    }
}

impl Backend for HttpChat {
    fn respond(&self, request: &ChatRequest, _digest: &str) -> Result<String, LlmError> {
        let body = json!({
            "model": self.model,
            "messages": request.messages,
            "temperature": request.temperature,
        });
        let result = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(body.to_string());
        let mut response = match result {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Err(LlmError::TimeoutExceeded { secs: self.timeout }),
            Err(e) => return Err(LlmError::Transport(e.to_string())),
        };
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => LlmError::TimeoutExceeded { secs: self.timeout },
            other => LlmError::Transport(other.to_string()),
        })?;
        if !(200..300).contains(&status) {
            return Err(LlmError::ProviderError {
                status,
                body: excerpt(&text),
            });
        }
        let value: Value = serde_json::from_str(&text).map_err(|_| LlmError::ProviderError {
            status,
            body: excerpt(&text),
        })?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::ProviderError {
                status,
                body: format!("response has no choices[0].message.content: {}", excerpt(&text)),
            })
    }
}
