//! Replays the checked-in fuzz seeds through the same entry points the fuzz
//! targets call.

use std::path::Path;

fn seeds(target: &str) -> Vec<String> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<String> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| std::fs::read_to_string(e.unwrap().path()).unwrap())
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn bioasq_seeds() {
    for s in seeds("questions_json") {
        assert!(medqa::bioasq::parse_questions(&s).is_ok());
    }
    for s in seeds("submission_json") {
        assert!(medqa::bioasq::parse_submission(&s).is_ok());
    }
}

#[test]
fn answer_seeds() {
    for s in seeds("json_string_array") {
        if let Ok(items) = medqa::answer::parse_json_string_array(&s) {
            assert!(items.iter().all(|i| !i.is_empty() && i.trim() == i));
        }
    }
    for s in seeds("yesno") {
        if let Ok(v) = medqa::answer::normalize_yesno(&s) {
            assert_eq!(medqa::answer::normalize_yesno(v.as_str()), Ok(v));
        }
    }
    for s in seeds("rerank_reply") {
        for n in [0usize, 1, 10, 50] {
            if let Ok(indices) = medqa::retrieval::parse_rerank_reply(&s, n) {
                assert!(indices.len() <= 10 && indices.iter().all(|&i| i >= 1 && i <= n));
            }
        }
    }
}

#[test]
fn eutils_seeds() {
    for s in seeds("efetch_xml") {
        let _ = medqa::pubmed::parse_efetch(&s);
    }
    for s in seeds("esearch_json") {
        let _ = medqa::pubmed::parse_esearch(&s);
    }
}

#[test]
fn medproc_and_config_seeds() {
    let tags = vec!["procedure".to_string()];
    for s in seeds("gazetteer_tsv") {
        let entries = medqa::medproc::parse_gazetteer(&s, &Default::default(), &tags).unwrap();
        assert!(!entries.is_empty());
    }
    for s in seeds("mentions_tsv") {
        let _ = medqa::medproc::parse_mentions_tsv(&s);
        let _ = medqa::medproc::parse_indexing_tsv(&s);
        let _ = medqa::medproc::parse_examples(&s);
    }
    for s in seeds("cassette") {
        let _ = serde_json::from_str::<medqa::llm::ScriptFile>(&s);
        let _ = serde_json::from_str::<medqa::pubmed::PubmedCassette>(&s);
        let _ = serde_json::from_str::<medqa::llm::Cassette>(&s);
    }
    for s in seeds("config") {
        let _ = medqa::config::RunConfig::from_toml_str(&s, &[], Path::new("/"));
    }
}
