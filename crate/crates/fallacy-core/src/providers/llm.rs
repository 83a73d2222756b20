//! Live chat-completion clients.
//!
//! Each provider speaks its own wire format behind the shared completion
//! contract. Credentials come only from environment variables; rate
//! limits and transient transport failures retry with exponential
//! backoff up to a configured cap.

use super::{cache_key, CompletionClient, CompletionError, CompletionRequest, CompletionResponse};
use serde_json::{json, Value};
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderKind {
    OpenAi,
    Anthropic,
    Gemini,
}

impl ProviderKind {
    pub fn name(self) -> &'static str {
        match self {
            ProviderKind::OpenAi => "openai",
            ProviderKind::Anthropic => "anthropic",
            ProviderKind::Gemini => "gemini",
        }
    }

    pub fn env_var(self) -> &'static str {
        match self {
            ProviderKind::OpenAi => "OPENAI_API_KEY",
            ProviderKind::Anthropic => "ANTHROPIC_API_KEY",
            ProviderKind::Gemini => "GEMINI_API_KEY",
        }
    }

    pub fn default_base_url(self) -> &'static str {
        match self {
            ProviderKind::OpenAi => "https://api.openai.com/v1",
            ProviderKind::Anthropic => "https://api.anthropic.com",
            ProviderKind::Gemini => "https://generativelanguage.googleapis.com",
        }
    }

    pub fn from_name(name: &str) -> Option<ProviderKind> {
        match name {
            "openai" => Some(ProviderKind::OpenAi),
            "anthropic" => Some(ProviderKind::Anthropic),
            "gemini" => Some(ProviderKind::Gemini),
            _ => None,
        }
    }
}

/// Backoff settings for rate limits and transient transport failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64 << attempt.min(16);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

pub struct HttpClient {
    kind: ProviderKind,
    base_url: String,
    api_key: String,
    retry: RetryPolicy,
    http: reqwest::blocking::Client,
}

impl HttpClient {
    /// Build a client with the API key taken from the provider's
    /// environment variable. The error names the missing variable.
    pub fn from_env(
        kind: ProviderKind,
        base_url: Option<String>,
        retry: RetryPolicy,
    ) -> Result<HttpClient, CompletionError> {
        let variable = kind.env_var();
        let api_key = std::env::var(variable)
            .ok()
            .filter(|v| !v.is_empty())
            .ok_or_else(|| CompletionError::MissingCredential {
                variable: variable.to_string(),
            })?;
        Ok(Self::with_key(kind, api_key, base_url, retry))
    }

    pub fn with_key(
        kind: ProviderKind,
        api_key: String,
        base_url: Option<String>,
        retry: RetryPolicy,
    ) -> HttpClient {
        HttpClient {
            kind,
            base_url: base_url.unwrap_or_else(|| kind.default_base_url().to_string()),
            api_key,
            retry,
            http: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("reqwest client builds"),
        }
    }

    fn endpoint(&self, request: &CompletionRequest) -> String {
        let base = self.base_url.trim_end_matches('/');
        match self.kind {
            ProviderKind::OpenAi => format!("{base}/chat/completions"),
            ProviderKind::Anthropic => format!("{base}/v1/messages"),
            ProviderKind::Gemini => format!(
                "{base}/v1beta/models/{}:generateContent?key={}",
                request.model, self.api_key
            ),
        }
    }

    fn body(&self, request: &CompletionRequest) -> Value {
        match self.kind {
            ProviderKind::OpenAi => json!({
                "model": request.model,
                "messages": [{"role": "user", "content": request.prompt}],
                "temperature": request.temperature,
                "max_tokens": request.max_output,
            }),
            ProviderKind::Anthropic => json!({
                "model": request.model,
                "max_tokens": request.max_output,
                "temperature": request.temperature,
                "messages": [{"role": "user", "content": request.prompt}],
            }),
            ProviderKind::Gemini => json!({
                "contents": [{"parts": [{"text": request.prompt}]}],
                "generationConfig": {
                    "temperature": request.temperature,
                    "maxOutputTokens": request.max_output,
                },
            }),
        }
    }

    fn send_once(&self, request: &CompletionRequest) -> Result<(String, u64, u64), Attempt> {
        let mut http_request = self.http.post(self.endpoint(request)).json(&self.body(request));
        match self.kind {
            ProviderKind::OpenAi => {
                http_request = http_request.bearer_auth(&self.api_key);
            }
            ProviderKind::Anthropic => {
                http_request = http_request
                    .header("x-api-key", &self.api_key)
                    .header("anthropic-version", "2023-06-01");
            }
            ProviderKind::Gemini => {}
        }
        let response = http_request.send().map_err(|e| {
            Attempt::Retryable(CompletionError::Transport {
                message: e.to_string(),
            })
        })?;

        let status = response.status().as_u16();
        let text = response.text().unwrap_or_default();
        match status {
            200..=299 => {}
            401 | 403 => {
                return Err(Attempt::Fatal(CompletionError::Auth {
                    status,
                    message: truncate(&text, 200),
                }))
            }
            429 | 529 => {
                return Err(Attempt::RateLimit(status));
            }
            500..=599 | 408 => {
                return Err(Attempt::Retryable(CompletionError::Transport {
                    message: format!("status {status}: {}", truncate(&text, 200)),
                }))
            }
            _ => {
                return Err(Attempt::Fatal(CompletionError::Transport {
                    message: format!("status {status}: {}", truncate(&text, 200)),
                }))
            }
        }

        let value: Value = serde_json::from_str(&text).map_err(|e| {
            Attempt::Fatal(CompletionError::Transport {
                message: format!("malformed response body: {e}"),
            })
        })?;
        Ok(self.extract(&value))
    }

    fn extract(&self, value: &Value) -> (String, u64, u64) {
        let text = match self.kind {
            ProviderKind::OpenAi => value["choices"][0]["message"]["content"]
                .as_str()
                .unwrap_or_default()
                .to_string(),
            ProviderKind::Anthropic => value["content"]
                .as_array()
                .map(|blocks| {
                    blocks
                        .iter()
                        .filter_map(|b| b["text"].as_str())
                        .collect::<Vec<_>>()
                        .join("")
                })
                .unwrap_or_default(),
            ProviderKind::Gemini => value["candidates"][0]["content"]["parts"]
                .as_array()
                .map(|parts| {
                    parts
                        .iter()
                        .filter_map(|p| p["text"].as_str())
                        .collect::<Vec<_>>()
                        .join("")
                })
                .unwrap_or_default(),
        };
        let (input, output) = match self.kind {
            ProviderKind::OpenAi => (
                value["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
                value["usage"]["completion_tokens"].as_u64().unwrap_or(0),
            ),
            ProviderKind::Anthropic => (
                value["usage"]["input_tokens"].as_u64().unwrap_or(0),
                value["usage"]["output_tokens"].as_u64().unwrap_or(0),
            ),
            ProviderKind::Gemini => (
                value["usageMetadata"]["promptTokenCount"].as_u64().unwrap_or(0),
                value["usageMetadata"]["candidatesTokenCount"].as_u64().unwrap_or(0),
            ),
        };
        (text, input, output)
    }
}

enum Attempt {
    RateLimit(u16),
    Retryable(CompletionError),
    Fatal(CompletionError),
}

impl CompletionClient for HttpClient {
    fn provider(&self) -> &str {
        self.kind.name()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, CompletionError> {
        request.validate()?;
        let mut retries = 0;
        loop {
            match self.send_once(request) {
                Ok((text, input_tokens, output_tokens)) => {
                    if text.trim().is_empty() {
                        return Err(CompletionError::EmptyResponse);
                    }
                    let key = cache_key(
                        self.provider(),
                        &request.model,
                        request.temperature,
                        &request.prompt,
                    );
                    return Ok(CompletionResponse {
                        key,
                        text,
                        retries,
                        from_cache: false,
                        input_tokens,
                        output_tokens,
                    });
                }
                Err(Attempt::Fatal(error)) => return Err(error),
                Err(Attempt::RateLimit(status)) => {
                    if retries + 1 >= self.retry.max_attempts {
                        return Err(CompletionError::RateLimited {
                            status,
                            attempts: retries + 1,
                        });
                    }
                    std::thread::sleep(self.retry.delay(retries));
                    retries += 1;
                }
                Err(Attempt::Retryable(error)) => {
                    if retries + 1 >= self.retry.max_attempts {
                        return Err(error);
                    }
                    std::thread::sleep(self.retry.delay(retries));
                    retries += 1;
                }
            }
        }
    }
}

fn truncate(s: &str, limit: usize) -> String {
    if s.len() <= limit {
        s.to_string()
    } else {
        let mut end = limit;
        while !s.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}…", &s[..end])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    // Minimal one-shot HTTP responder for exercising the retry path
    // without leaving the process.
    fn spawn_fake_endpoint(responses: Vec<(u16, String)>) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = [0u8; 8192];
                let _ = stream.read(&mut buf);
                let reason = match status {
                    200 => "OK",
                    429 => "Too Many Requests",
                    _ => "Error",
                };
                let reply = format!(
                    "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(reply.as_bytes());
            }
        });
        format!("http://{addr}")
    }

    fn openai_body(content: &str) -> String {
        serde_json::to_string(&json!({
            "choices": [{"message": {"role": "assistant", "content": content}}],
            "usage": {"prompt_tokens": 7, "completion_tokens": 3},
        }))
        .unwrap()
    }

    #[test]
    fn missing_credential_names_the_variable() {
        std::env::remove_var("OPENAI_API_KEY");
        let err = HttpClient::from_env(ProviderKind::OpenAi, None, RetryPolicy::default())
            .err()
            .unwrap();
        assert!(err.to_string().contains("OPENAI_API_KEY"));
    }

    #[test]
    fn throttle_then_success_counts_one_retry() {
        let base = spawn_fake_endpoint(vec![
            (429, "{\"error\": \"slow down\"}".to_string()),
            (200, openai_body("yes")),
        ]);
        let retry = RetryPolicy {
            max_attempts: 5,
            base_delay_ms: 1,
            max_delay_ms: 10,
        };
        let client = HttpClient::with_key(ProviderKind::OpenAi, "k".into(), Some(base), retry);
        let response = client.complete(&CompletionRequest::new("m", "q")).unwrap();
        assert_eq!(response.text, "yes");
        assert_eq!(response.retries, 1);
        assert_eq!(response.input_tokens, 7);
        assert_eq!(response.output_tokens, 3);
    }

    #[test]
    fn rate_limit_exhausts_budget() {
        let base = spawn_fake_endpoint(vec![
            (429, "{}".to_string()),
            (429, "{}".to_string()),
        ]);
        let retry = RetryPolicy {
            max_attempts: 2,
            base_delay_ms: 1,
            max_delay_ms: 5,
        };
        let client = HttpClient::with_key(ProviderKind::OpenAi, "k".into(), Some(base), retry);
        let err = client.complete(&CompletionRequest::new("m", "q")).unwrap_err();
        assert!(matches!(err, CompletionError::RateLimited { attempts: 2, .. }));
    }

    #[test]
    fn auth_failure_is_not_retried() {
        let base = spawn_fake_endpoint(vec![(401, "{\"error\": \"bad key\"}".to_string())]);
        let client = HttpClient::with_key(
            ProviderKind::OpenAi,
            "bad".into(),
            Some(base),
            RetryPolicy { max_attempts: 5, base_delay_ms: 1, max_delay_ms: 5 },
        );
        let err = client.complete(&CompletionRequest::new("m", "q")).unwrap_err();
        assert!(matches!(err, CompletionError::Auth { status: 401, .. }));
    }

    #[test]
    fn empty_response_is_an_error() {
        let base = spawn_fake_endpoint(vec![(200, openai_body("   "))]);
        let client = HttpClient::with_key(
            ProviderKind::OpenAi,
            "k".into(),
            Some(base),
            RetryPolicy::default(),
        );
        let err = client.complete(&CompletionRequest::new("m", "q")).unwrap_err();
        assert!(matches!(err, CompletionError::EmptyResponse));
    }
}
