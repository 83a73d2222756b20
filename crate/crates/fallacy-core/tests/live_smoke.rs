//! Optional live smoke test (ignored by default; excluded from CI).
//!
//! Requires credentials:
//!   FALLACY_SMOKE_PROVIDER = openai | anthropic | gemini
//!   FALLACY_SMOKE_MODEL    = model identifier
//!   plus the provider's API-key environment variable.
//!
//! Run with: cargo test -p fallacy-core --test live_smoke -- --ignored

use fallacy_core::instructions::{
    parse_catalog, parse_instruction_set, parse_test_cases, AliasTable,
};
use fallacy_core::pipelines::{
    run_baseline, run_graph_augmented_monolithic, run_hierarchical, run_stepwise_monolithic,
    LlmOptions,
};
use fallacy_core::providers::{
    CachingClient, CompletionClient, CompletionError, CompletionRequest, CompletionResponse,
    HttpClient, ProviderKind, RetryPolicy, TranscriptStore,
};
use fallacy_core::relations::parse_relation_facts;
use fallacy_core::taxonomy::load_taxonomy;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

struct CountingClient<C> {
    inner: C,
    calls: AtomicU32,
}

impl<C: CompletionClient> CompletionClient for CountingClient<C> {
    fn provider(&self) -> &str {
        self.inner.provider()
    }
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, CompletionError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(request)
    }
}

#[test]
#[ignore = "live network test; needs FALLACY_SMOKE_PROVIDER and credentials"]
fn live_smoke_all_pipelines_populate_and_replay() {
    let Ok(provider_name) = std::env::var("FALLACY_SMOKE_PROVIDER") else {
        eprintln!("skipping: FALLACY_SMOKE_PROVIDER is not set");
        return;
    };
    let model = std::env::var("FALLACY_SMOKE_MODEL")
        .expect("FALLACY_SMOKE_MODEL must name the model to exercise");
    let kind = ProviderKind::from_name(&provider_name).expect("known provider");

    let set = parse_instruction_set(&std::fs::read(fixture("instructions.json")).unwrap()).unwrap();
    let cases = parse_test_cases(&std::fs::read(fixture("corpus.jsonl")).unwrap()).unwrap();
    let catalog = parse_catalog(&std::fs::read(fixture("catalog.json")).unwrap()).unwrap();
    let taxonomy = load_taxonomy(&std::fs::read(fixture("taxonomy.json")).unwrap()).unwrap();
    let (graph, _) = parse_relation_facts(
        &String::from_utf8_lossy(&std::fs::read(fixture("relations.pro")).unwrap()),
    )
    .unwrap();
    let mut aliases = AliasTable::parse(
        &String::from_utf8_lossy(&std::fs::read(fixture("aliases.txt")).unwrap()),
    )
    .unwrap();
    aliases.merge(&AliasTable::from_name_list(set.names()));
    let case = cases[0].clone();

    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(TranscriptStore::open(dir.path().join("smoke.jsonl")).unwrap());
    let http = HttpClient::from_env(kind, None, RetryPolicy::default()).expect("credentials");
    let counting = CountingClient {
        inner: http,
        calls: AtomicU32::new(0),
    };
    let client = CachingClient::new(counting, store.clone());
    let options = LlmOptions::new(&model);

    let run_all = |client: &dyn CompletionClient| {
        vec![
            run_baseline(&case, &catalog, client, &aliases, &options),
            run_hierarchical(&case, &taxonomy, client, &aliases, &options),
            run_stepwise_monolithic(&case, &set, client, &aliases, &options),
            run_graph_augmented_monolithic(&case, &set, &graph, client, &aliases, &options),
        ]
    };

    let first = run_all(&client);
    let entries_after_first = store.len();
    assert!(entries_after_first > 0, "transcript store populated");
    let network_calls_after_first = client.inner().calls.load(Ordering::SeqCst);
    assert!(network_calls_after_first > 0);

    // Re-run from cache: zero network calls, identical output.
    let second = run_all(&client);
    assert_eq!(
        client.inner().calls.load(Ordering::SeqCst),
        network_calls_after_first,
        "warm cache must not touch the network"
    );
    assert_eq!(store.len(), entries_after_first, "no new transcript entries");
    assert_eq!(
        serde_json::to_vec(&first).unwrap(),
        serde_json::to_vec(&second).unwrap(),
        "replay must be byte-identical"
    );
    eprintln!(
        "live smoke: {} transcript entries via {} ({})",
        store.len(),
        provider_name,
        model
    );
}
