use std::sync::Arc;

use chrono::NaiveDate;
use medqa::answer::{Answerer, ExactAnswer, Verdict};
use medqa::llm::{Cassette, Gateway, RecorderBackend, ResponseCache, ScriptRule, ScriptedBackend};
use medqa::pubmed::{FixtureTransport, PubmedCassette, PubmedClient, RateLimiter, SystemClock};
use medqa::retrieval::{RetrievalMode, RetrievalSettings, Retriever};
use medqa::{Question, QuestionType};

fn script() -> ScriptedBackend {
    ScriptedBackend::from_rules(vec![
        ScriptRule::respond(&["Expand this search query:"], "statins AND myopathy"),
        ScriptRule::respond(&["Rerank the articles"], "2, 1"),
        ScriptRule::respond(&["'yes' or 'no'"], "Yes."),
        ScriptRule::respond(&[], "Statins can cause muscle damage."),
    ])
}

fn pubmed() -> PubmedClient {
    let mut cassette = PubmedCassette::default();
    cassette
        .add_search("statins AND myopathy", &["100", "200", "300"])
        .add_article("100", "Statin use and muscle symptoms")
        .add_article("200", "Statin-induced myopathy: a review");
    PubmedClient::new(
        Arc::new(FixtureTransport::new(cassette)),
        Arc::new(RateLimiter::new(f64::INFINITY, Arc::new(SystemClock::default()))),
    )
}

fn settings() -> RetrievalSettings {
    RetrievalSettings {
        model_id: "gpt-3.5-turbo".into(),
        mode: RetrievalMode::Expanded,
        max_date: NaiveDate::from_ymd_opt(2022, 12, 31).unwrap(),
        search_limit: 50,
        output_limit: 10,
    }
}

fn question() -> Question {
    Question::new("s1", "Can statins cause myopathy?", QuestionType::Yesno)
}

#[test]
fn retrieval_then_answering_end_to_end() {
    let gateway = Gateway::new(Arc::new(script()));
    let client = pubmed();
    let trace = Retriever::new(&gateway, &client, settings()).retrieve(&question()).unwrap();
    assert_eq!(trace.expanded_query.as_deref(), Some("statins AND myopathy"));
    assert!(trace.reformulated_query.is_none());
    assert_eq!(trace.missing_pmids, ["300"]);
    assert_eq!(trace.final_documents, ["200", "100"]);
    assert!(trace.fallback.is_none());

    let bundle = Answerer::new(&gateway, "gpt-3.5-turbo").answer(&question(), true).unwrap();
    assert_eq!(bundle.exact, ExactAnswer::YesNo(Verdict::Yes));
    assert_eq!(bundle.ideal.text, "Statins can cause muscle damage.");
    assert_eq!(gateway.transcript().len(), 4);
}

#[test]
fn cache_serves_a_second_run_without_backend_calls() {
    let dir = tempfile::tempdir().unwrap();
    let cache = ResponseCache::new(dir.path()).unwrap();
    let client = pubmed();

    let first = Gateway::new(Arc::new(script())).with_cache(cache.clone());
    let a = Retriever::new(&first, &client, settings()).retrieve(&question()).unwrap();
    assert_eq!(first.network_calls(), 2);

    let empty = Gateway::new(Arc::new(ScriptedBackend::default())).with_cache(cache);
    let b = Retriever::new(&empty, &client, settings()).retrieve(&question()).unwrap();
    assert_eq!(empty.network_calls(), 0);
    assert!(empty.transcript().iter().all(|t| t.cached));
    assert_eq!(a.final_documents, b.final_documents);
}

#[test]
fn recorded_cassette_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("llm.json");
    let client = pubmed();

    let recorder = Gateway::new(Arc::new(RecorderBackend::new(Arc::new(script()), &path).unwrap()));
    let live = Retriever::new(&recorder, &client, settings()).retrieve(&question()).unwrap();

    let replay = Gateway::new(Arc::new(ScriptedBackend::from_cassette(&Cassette::load(&path).unwrap())));
    let replayed = Retriever::new(&replay, &client, settings()).retrieve(&question()).unwrap();
    assert_eq!(live.final_documents, replayed.final_documents);
    assert_eq!(live.rerank_reply, replayed.rerank_reply);
}

#[test]
fn transient_failures_exhaust_into_an_item_error() {
    let backend = ScriptedBackend::new(medqa::llm::ScriptFile {
        rules: vec![ScriptRule {
            fail: Some(medqa::llm::FailKind::Transient),
            ..Default::default()
        }],
        ..Default::default()
    });
    let gateway = Gateway::new(Arc::new(backend)).with_retry(medqa::llm::RetryPolicy {
        max_retries: 2,
        backoff: medqa::llm::Backoff::new(std::time::Duration::ZERO),
    });
    let client = pubmed();
    let err = Retriever::new(&gateway, &client, settings()).retrieve(&question()).unwrap_err();
    assert!(err.to_string().contains("3 attempts"), "{err}");
    assert_eq!(gateway.network_calls(), 3);
}
