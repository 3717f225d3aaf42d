use std::collections::BTreeMap;
use std::sync::Arc;

use medqa::config::GazetteerColumns;
use medqa::llm::{Gateway, ScriptRule, ScriptedBackend};
use medqa::medproc::{
    index_document, link_mentions, parse_examples, parse_gazetteer, parse_indexing_tsv,
    parse_mentions_tsv, render_el_tsv, render_indexing_tsv, render_ner_tsv, Gazetteer,
    ProcedureExtractor, NO_CODE,
};
use medqa::metrics::evaluate_medproc;

const GAZETTEER: &str = "code\tterm\tsemantic_tag
10847001\tbroncoscopia\tprocedure
24341003\tbiopsia bronquial\tprocedure
399208008\tradiografía de tórax\tprocedure
386661006\tfiebre\tfinding
";

const EXAMPLES: &str = r#"[
  {"text": "Se realizó una ecografía abdominal.", "procedures": ["ecografía abdominal"]},
  {"text": "Sin intervenciones.", "procedures": []}
]"#;

const REPORT: &str = "Paciente con fiebre. Se practicó Broncoscopia con biopsias bronquiales \
y una radiografía de tórax. Nueva broncoscopia al alta; ecocardiograma normal.";

#[test]
fn extraction_linking_and_indexing() {
    let gateway = Gateway::new(Arc::new(ScriptedBackend::from_rules(vec![ScriptRule::respond(
        &[],
        r#"```json
["broncoscopia", "biopsias bronquiales", "radiografía de tórax", "ecocardiograma", "endoscopia"]
```"#,
    )])));
    let examples = parse_examples(EXAMPLES).unwrap();
    let extractor = ProcedureExtractor::new(&gateway, "gpt-4", examples, 2).unwrap();
    let mut extraction = extractor.extract("caso", REPORT).unwrap();
    assert_eq!(extraction.dropped, ["endoscopia"]);
    assert_eq!(extraction.mentions.len(), 5);
    assert!(extraction.mentions.iter().all(|m| m.matches(REPORT)));
    assert_eq!(extraction.mentions[0].text, "Broncoscopia");

    let tags = vec!["procedure".to_string()];
    let gazetteer = Gazetteer::new(parse_gazetteer(GAZETTEER, &GazetteerColumns::default(), &tags).unwrap());
    assert_eq!(gazetteer.len(), 3);
    link_mentions(&mut extraction.mentions, &gazetteer, 0.25);
    let codes: Vec<Option<&str>> = extraction.mentions.iter().map(|m| m.code.as_deref()).collect();
    assert_eq!(
        codes,
        [Some("10847001"), Some("24341003"), Some("399208008"), Some("10847001"), None]
    );

    let el = render_el_tsv(&extraction.mentions);
    assert!(el.lines().last().unwrap().ends_with(NO_CODE), "{el}");
    let back = parse_mentions_tsv(&el).unwrap();
    let linked_back: Vec<_> = back.iter().map(|m| m.code.clone()).collect();
    let linked: Vec<_> = extraction.mentions.iter().map(|m| m.code.clone()).collect();
    assert_eq!(linked_back, linked);
    assert_eq!(evaluate_medproc(&extraction.mentions, &back).entity_linking.f1, 1.0);

    let ner = parse_mentions_tsv(&render_ner_tsv(&extraction.mentions)).unwrap();
    assert_eq!(ner.len(), 5);
    assert!(ner.iter().all(|m| m.code.is_none()));

    let index = BTreeMap::from([("caso".to_string(), index_document(&extraction.mentions))]);
    let text = render_indexing_tsv(&index);
    assert!(text.contains("caso\t10847001+24341003+399208008"), "{text}");
    assert_eq!(parse_indexing_tsv(&text).unwrap(), index);
}

#[test]
fn wrong_example_count_is_rejected() {
    let gateway = Gateway::new(Arc::new(ScriptedBackend::default()));
    let examples = parse_examples(EXAMPLES).unwrap();
    assert!(ProcedureExtractor::new(&gateway, "gpt-4", examples, 3).is_err());
}
