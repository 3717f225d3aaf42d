mod common;

use std::sync::Arc;
use std::time::Duration;

use chrono::NaiveDate;
use common::QueueServer;
use medqa::llm::{
    profile_for, Backoff, ChatExchange, ChatMessage, Gateway, GatewayError, HttpBackend,
    RecordingSleeper, RetryPolicy, Step,
};
use medqa::pubmed::{
    ArticleRecord, HttpTransport, PubmedClient, PubmedError, RateLimiter,
    SearchRequest, SystemClock,
};
use serde_json::json;

fn completion(text: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

fn exchange() -> ChatExchange {
    ChatExchange::new(
        "gpt-3.5-turbo",
        vec![
            ChatMessage::new(medqa::llm::Role::System, "You are a helpful assistant."),
            ChatMessage::user("Expand this search query: insulin"),
        ],
        profile_for(Step::Expansion),
    )
}

fn gateway(base_url: &str, sleeper: Arc<RecordingSleeper>) -> Gateway {
    Gateway::new(Arc::new(HttpBackend::new(base_url, "sk-test-secret", Duration::from_secs(5))))
        .with_retry(RetryPolicy {
            max_retries: 3,
            backoff: Backoff::new(Duration::from_millis(100)),
        })
        .with_sleeper(sleeper)
}

#[test]
fn transient_server_errors_are_retried_until_success() {
    let server = QueueServer::start(vec![
        (500, "text/plain", "boom".into()),
        (500, "text/plain", "boom".into()),
        (200, "application/json", completion("insulin OR \"insulin therapy\"")),
    ]);
    let sleeper = Arc::new(RecordingSleeper::default());
    let gw = gateway(&server.base_url, sleeper.clone());
    let mut ex = exchange();
    let reply = gw.complete(&mut ex).unwrap();
    let seen = server.finish();

    assert_eq!(reply, "insulin OR \"insulin therapy\"");
    assert_eq!(ex.attempt_count, 3);
    assert_eq!(gw.network_calls(), 3);
    let delays = sleeper.delays();
    assert_eq!(delays.len(), 2);
    assert!(delays[0] >= Duration::from_millis(50) && delays[0] <= Duration::from_millis(100));
    assert!(delays[1] >= Duration::from_millis(100) && delays[1] <= Duration::from_millis(200));

    assert_eq!(seen.len(), 3);
    assert!(seen[0].request_line.starts_with("POST /chat/completions"));
    assert_eq!(seen[0].header("authorization"), Some("Bearer sk-test-secret"));
    let body: serde_json::Value = serde_json::from_str(&seen[0].body).unwrap();
    assert_eq!(body["model"], "gpt-3.5-turbo");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["role"], "system");
}

#[test]
fn auth_failure_is_not_retried_and_hides_the_key() {
    let server = QueueServer::start(vec![(401, "application/json", "{\"error\":\"bad key\"}".into())]);
    let sleeper = Arc::new(RecordingSleeper::default());
    let gw = gateway(&server.base_url, sleeper.clone());
    let err = gw.complete(&mut exchange()).unwrap_err();
    server.finish();

    assert!(matches!(err, GatewayError::Auth(_)), "{err:?}");
    assert_eq!(gw.network_calls(), 1);
    assert!(sleeper.delays().is_empty());
    assert!(!err.to_string().contains("sk-test-secret"));
    assert!(gw.transcript().iter().all(|t| !format!("{t:?}").contains("sk-test-secret")));
}

#[test]
fn retries_exhaust_on_persistent_overload() {
    let server = QueueServer::start(vec![(429, "text/plain", "slow down".into()); 4]);
    let gw = gateway(&server.base_url, Arc::new(RecordingSleeper::default()));
    let err = gw.complete(&mut exchange()).unwrap_err();
    server.finish();
    assert!(matches!(err, GatewayError::TransportExhausted { attempts: 4, .. }), "{err:?}");
}

fn pubmed(base_url: &str) -> PubmedClient {
    PubmedClient::new(
        Arc::new(HttpTransport::new(base_url, Some("ncbi-key".into()), "pdat", Duration::from_secs(5))),
        Arc::new(RateLimiter::new(100.0, Arc::new(SystemClock::default()))),
    )
    .with_retry(2, Backoff::new(Duration::from_millis(1)))
    .with_sleeper(Arc::new(RecordingSleeper::default()))
}

const EFETCH: &str = r#"<?xml version="1.0"?>
<PubmedArticleSet>
 <PubmedArticle><MedlineCitation><PMID Version="1">111</PMID><Article>
  <ArticleTitle>Insulin and <i>glucose</i> uptake.</ArticleTitle>
  <Abstract><AbstractText Label="BACKGROUND">First.</AbstractText><AbstractText>Second.</AbstractText></Abstract>
 </Article></MedlineCitation></PubmedArticle>
</PubmedArticleSet>"#;

#[test]
fn eutils_search_and_fetch_over_http() {
    let server = QueueServer::start(vec![
        (503, "text/plain", "busy".into()),
        (200, "application/json", r#"{"esearchresult":{"count":"2","idlist":["111","222","111"]}}"#.into()),
        (200, "text/xml", EFETCH.into()),
    ]);
    let client = pubmed(&server.base_url);
    let hits = client
        .search(&SearchRequest {
            query: "insulin".into(),
            max_date: NaiveDate::from_ymd_opt(2022, 12, 31).unwrap(),
            limit: 50,
        })
        .unwrap();
    assert_eq!(hits, ["111", "222"]);
    let records = client.fetch_articles(&hits).unwrap();
    let seen = server.finish();

    match &records[0] {
        ArticleRecord::Found(a) => {
            assert_eq!(a.title, "Insulin and glucose uptake.");
            assert!(a.abstract_text.as_deref().unwrap().contains("Second."));
        }
        other => panic!("expected an article, got {other:?}"),
    }
    assert_eq!(records[1], ArticleRecord::Missing { pmid: "222".into() });

    let search_line = &seen[1].request_line;
    assert!(search_line.starts_with("GET /esearch.fcgi?"), "{search_line}");
    for param in ["term=insulin", "sort=relevance", "retmax=50", "maxdate=2022%2F12%2F31", "api_key=ncbi-key"] {
        assert!(search_line.contains(param), "{param} missing from {search_line}");
    }
    assert!(seen[2].request_line.contains("id=111%2C222"), "{}", seen[2].request_line);
}

#[test]
fn eutils_query_error_is_reported_as_rejection() {
    let server = QueueServer::start(vec![(
        400,
        "application/json",
        r#"{"esearchresult":{"ERROR":"Invalid query"}}"#.into(),
    )]);
    let err = pubmed(&server.base_url)
        .search(&SearchRequest {
            query: "((".into(),
            max_date: NaiveDate::from_ymd_opt(2022, 12, 31).unwrap(),
            limit: 5,
        })
        .unwrap_err();
    server.finish();
    assert!(matches!(err, PubmedError::QuerySyntaxRejected(_)), "{err:?}");
}
