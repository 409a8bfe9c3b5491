//! OpenAI-compatible chat-completions client.

use std::time::Duration;

use async_trait::async_trait;
use serde::Deserialize;
use serde_json::json;

use super::{count_tokens, BackendConfig, BackendError, ChatBackend, Completion, CompletionRequest, API_KEY_ENV};

#[derive(Debug, Clone)]
pub struct HttpBackend {
    client: reqwest::Client,
    url: String,
    model_name: String,
    temperature: f64,
    api_key: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Debug, Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Usage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

impl HttpBackend {
    /// Reads the API key from `RUBRICATE_API_KEY`; requests go out without
    /// an `Authorization` header when it is unset.
    pub fn new(config: &BackendConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        HttpBackend::with_api_key(config, api_key)
    }

    pub fn with_api_key(config: &BackendConfig, api_key: Option<String>) -> Result<Self, BackendError> {
        config.validate()?;
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::InvalidConfig(format!("http client: {e}")))?;
        Ok(HttpBackend {
            client,
            url: format!("{}/chat/completions", config.endpoint_url.trim_end_matches('/')),
            model_name: config.model_name.clone(),
            temperature: config.temperature,
            api_key,
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

fn classify_status(status: reqwest::StatusCode, body: &str) -> BackendError {
    let snippet: String = body.chars().take(200).collect();
    let message = format!("HTTP {status}: {snippet}");
    if status.as_u16() == 429 || status.is_server_error() || status.as_u16() == 408 {
        BackendError::Retryable(message)
    } else {
        BackendError::Fatal(message)
    }
}

#[async_trait]
impl ChatBackend for HttpBackend {
    async fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        if request.prompt.is_empty() {
            return Err(BackendError::Fatal("empty prompt".into()));
        }
        let body = json!({
            "model": self.model_name,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": request.prompt}],
        });
        let mut builder = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().await.map_err(|e| {
            if e.is_timeout() || e.is_connect() || e.is_request() {
                BackendError::Retryable(format!("transport: {e}"))
            } else {
                BackendError::Fatal(format!("transport: {e}"))
            }
        })?;
        let status = response.status();
        let text = response
            .text()
            .await
            .map_err(|e| BackendError::Retryable(format!("reading body: {e}")))?;
        if !status.is_success() {
            return Err(classify_status(status, &text));
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::Fatal(format!("malformed completion body: {e}")))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Fatal("completion has no message content".into()))?;
        let (input_tokens, output_tokens) = match parsed.usage {
            Some(u) => (u.prompt_tokens, u.completion_tokens),
            None => (count_tokens(&request.prompt), count_tokens(&content)),
        };
        Ok(Completion {
            text: content,
            input_tokens,
            output_tokens,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_classes() {
        use reqwest::StatusCode;
        assert!(classify_status(StatusCode::TOO_MANY_REQUESTS, "").is_retryable());
        assert!(classify_status(StatusCode::BAD_GATEWAY, "").is_retryable());
        assert!(!classify_status(StatusCode::UNAUTHORIZED, "").is_retryable());
        assert!(!classify_status(StatusCode::BAD_REQUEST, "").is_retryable());
    }

    #[test]
    fn url_joins_endpoint() {
        let config = BackendConfig {
            endpoint_url: "http://localhost:1234/v1/".into(),
            ..Default::default()
        };
        let b = HttpBackend::with_api_key(&config, None).unwrap();
        assert_eq!(b.url(), "http://localhost:1234/v1/chat/completions");
    }
}
