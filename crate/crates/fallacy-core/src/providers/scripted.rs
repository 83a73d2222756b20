//! Deterministic scripted completion client for tests and fixtures.

use super::{cache_key, CompletionClient, CompletionError, CompletionRequest, CompletionResponse};
use std::collections::HashMap;
use std::sync::Arc;

type ResponseFn = dyn Fn(&CompletionRequest) -> Option<String> + Send + Sync;

/// Answers from a fixed prompt → response map, with an optional fallback
/// function for pattern-based scripts. Misses are hard errors so fixture
/// gaps surface instead of silently degrading.
pub struct ScriptedClient {
    provider: String,
    by_prompt: HashMap<String, String>,
    fallback: Option<Arc<ResponseFn>>,
}

impl ScriptedClient {
    pub fn new(provider: impl Into<String>) -> ScriptedClient {
        ScriptedClient {
            provider: provider.into(),
            by_prompt: HashMap::new(),
            fallback: None,
        }
    }

    pub fn with_response(mut self, prompt: impl Into<String>, text: impl Into<String>) -> Self {
        self.by_prompt.insert(prompt.into(), text.into());
        self
    }

    pub fn with_fallback<F>(mut self, f: F) -> Self
    where
        F: Fn(&CompletionRequest) -> Option<String> + Send + Sync + 'static,
    {
        self.fallback = Some(Arc::new(f));
        self
    }
}

impl CompletionClient for ScriptedClient {
    fn provider(&self) -> &str {
        &self.provider
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, CompletionError> {
        request.validate()?;
        let text = self
            .by_prompt
            .get(&request.prompt)
            .cloned()
            .or_else(|| self.fallback.as_ref().and_then(|f| f(request)))
            .ok_or_else(|| CompletionError::NoScriptedResponse {
                prompt_prefix: request.prompt.chars().take(80).collect(),
            })?;
        Ok(CompletionResponse {
            key: cache_key(
                &self.provider,
                &request.model,
                request.temperature,
                &request.prompt,
            ),
            text,
            retries: 0,
            from_cache: false,
            input_tokens: 0,
            output_tokens: 0,
        })
    }
}
