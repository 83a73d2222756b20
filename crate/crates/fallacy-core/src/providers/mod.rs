//! Every way the system obtains answers and classifications: live chat
//! completion clients, a persistent transcript cache for exact replay,
//! scripted clients and oracles for deterministic runs, and the lenient
//! parsers for model output formats.

pub mod llm;
pub mod oracle;
pub mod parse;
pub mod prompts;
pub mod scripted;
pub mod transcript;

pub use llm::{HttpClient, ProviderKind, RetryPolicy};
pub use oracle::{
    parse_oracle_table, AnswerError, AnswerOutcome, BinaryAnswerer, LlmStepAnswerer,
    MissingKeyPolicy, ScriptedOracle, StepQuery,
};
pub use parse::{parse_binary_answer, parse_classification_output, parse_level_output};
pub use scripted::ScriptedClient;
pub use transcript::{cache_key, TranscriptEntry, TranscriptStore};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

/// One chat completion request. The cache key is derived from the
/// provider, model, temperature, and prompt; metadata is provenance only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_output: u32,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl CompletionRequest {
    /// Temperature defaults to 0 to maximize replay determinism.
    pub fn new(model: impl Into<String>, prompt: impl Into<String>) -> Self {
        CompletionRequest {
            model: model.into(),
            prompt: prompt.into(),
            temperature: 0.0,
            max_output: 4096,
            metadata: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), CompletionError> {
        if self.prompt.is_empty() {
            return Err(CompletionError::InvalidRequest {
                message: "prompt must be non-empty".into(),
            });
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(CompletionError::InvalidRequest {
                message: format!("temperature must be >= 0, got {}", self.temperature),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    /// Cache key this exchange is stored under.
    pub key: String,
    pub text: String,
    /// Retries spent before success (0 on first try or cache hit).
    pub retries: u32,
    pub from_cache: bool,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Error)]
pub enum CompletionError {
    #[error("invalid request: {message}")]
    InvalidRequest { message: String },
    #[error("missing credential: set the {variable} environment variable")]
    MissingCredential { variable: String },
    #[error("authentication failed (status {status}): {message}")]
    Auth { status: u16, message: String },
    #[error("rate limited after {attempts} attempts (status {status})")]
    RateLimited { status: u16, attempts: u32 },
    #[error("transport failure: {message}")]
    Transport { message: String },
    #[error("empty response from provider")]
    EmptyResponse,
    #[error("no scripted response for prompt starting {prompt_prefix:?}")]
    NoScriptedResponse { prompt_prefix: String },
    #[error("cache miss for key {key} (replay-only client)")]
    CacheMiss { key: String },
    #[error("transcript store: {0}")]
    Store(#[from] std::io::Error),
}

/// The chat completion contract. Implementations must tolerate concurrent
/// callers and be deterministic at temperature 0 with a warm cache.
pub trait CompletionClient: Send + Sync {
    fn provider(&self) -> &str;
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, CompletionError>;
}

/// Cache layer over any completion client.
///
/// A warm hit returns the stored response without touching the inner
/// client; a miss goes through and the exchange is appended to the store.
pub struct CachingClient<C> {
    inner: C,
    store: Arc<TranscriptStore>,
}

impl<C: CompletionClient> CachingClient<C> {
    pub fn new(inner: C, store: Arc<TranscriptStore>) -> Self {
        CachingClient { inner, store }
    }

    pub fn store(&self) -> &Arc<TranscriptStore> {
        &self.store
    }

    pub fn inner(&self) -> &C {
        &self.inner
    }

    pub fn into_inner(self) -> C {
        self.inner
    }
}

impl<C: CompletionClient> CompletionClient for CachingClient<C> {
    fn provider(&self) -> &str {
        self.inner.provider()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, CompletionError> {
        request.validate()?;
        let key = cache_key(
            self.provider(),
            &request.model,
            request.temperature,
            &request.prompt,
        );
        if let Some(entry) = self.store.get(&key) {
            return Ok(CompletionResponse {
                key,
                text: entry.response_text,
                retries: 0,
                from_cache: true,
                input_tokens: entry.input_tokens,
                output_tokens: entry.output_tokens,
            });
        }
        let response = self.inner.complete(request)?;
        self.store.append(&TranscriptEntry::capture(
            self.provider(),
            request,
            &response,
        ))?;
        Ok(response)
    }
}

/// Replay-only client: serves from an existing transcript store and fails
/// on any miss. Guarantees zero network contact.
pub struct ReplayClient {
    provider: String,
    store: Arc<TranscriptStore>,
}

impl ReplayClient {
    pub fn new(provider: impl Into<String>, store: Arc<TranscriptStore>) -> Self {
        ReplayClient {
            provider: provider.into(),
            store,
        }
    }
}

impl CompletionClient for ReplayClient {
    fn provider(&self) -> &str {
        &self.provider
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, CompletionError> {
        request.validate()?;
        let key = cache_key(
            &self.provider,
            &request.model,
            request.temperature,
            &request.prompt,
        );
        match self.store.get(&key) {
            Some(entry) => Ok(CompletionResponse {
                key,
                text: entry.response_text,
                retries: 0,
                from_cache: true,
                input_tokens: entry.input_tokens,
                output_tokens: entry.output_tokens,
            }),
            None => Err(CompletionError::CacheMiss { key }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct CountingClient {
        calls: AtomicU32,
    }

    impl CompletionClient for CountingClient {
        fn provider(&self) -> &str {
            "counting"
        }
        fn complete(
            &self,
            request: &CompletionRequest,
        ) -> Result<CompletionResponse, CompletionError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let key = cache_key("counting", &request.model, request.temperature, &request.prompt);
            Ok(CompletionResponse {
                key,
                text: format!("echo: {}", request.prompt),
                retries: 0,
                from_cache: false,
                input_tokens: 1,
                output_tokens: 1,
            })
        }
    }

    #[test]
    fn warm_cache_hits_without_inner_calls() {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(TranscriptStore::open(dir.path().join("t.jsonl")).unwrap());
        let client = CachingClient::new(CountingClient { calls: AtomicU32::new(0) }, store.clone());

        let request = CompletionRequest::new("m", "hello");
        let first = client.complete(&request).unwrap();
        assert!(!first.from_cache);
        let second = client.complete(&request).unwrap();
        assert!(second.from_cache);
        assert_eq!(second.text, first.text);
        assert_eq!(client.into_inner().calls.load(Ordering::SeqCst), 1);

        // A fresh store handle replays from disk.
        let reopened = Arc::new(TranscriptStore::open(dir.path().join("t.jsonl")).unwrap());
        let replay = ReplayClient::new("counting", reopened);
        let replayed = replay.complete(&request).unwrap();
        assert!(replayed.from_cache);
        assert_eq!(replayed.text, first.text);

        let miss = replay.complete(&CompletionRequest::new("m", "other"));
        assert!(matches!(miss, Err(CompletionError::CacheMiss { .. })));
    }

    #[test]
    fn invalid_requests_are_rejected() {
        let empty = CompletionRequest::new("m", "");
        assert!(matches!(
            empty.validate(),
            Err(CompletionError::InvalidRequest { .. })
        ));
        let mut negative = CompletionRequest::new("m", "p");
        negative.temperature = -1.0;
        assert!(negative.validate().is_err());
    }
}
