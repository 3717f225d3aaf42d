//! Decoders for eUtils payloads: esearch JSON and efetch PubMed XML.

use quick_xml::events::Event;
use quick_xml::Reader;
use serde_json::Value;

use super::Article;
use crate::types::is_valid_pmid;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PayloadError {
    #[error("eUtils rejected the query: {0}")]
    Rejected(String),
    #[error("malformed payload: {0}")]
    Malformed(String),
}

/// Reads the `idlist` of an esearch `retmode=json` response.
pub fn parse_esearch(body: &str) -> Result<Vec<String>, PayloadError> {
    let v: Value =
        serde_json::from_str(body).map_err(|e| PayloadError::Malformed(e.to_string()))?;
    if let Some(err) = v.get("error").and_then(Value::as_str) {
        return Err(PayloadError::Rejected(err.to_string()));
    }
    let result = v
        .get("esearchresult")
        .ok_or_else(|| PayloadError::Malformed("missing esearchresult".into()))?;
    if let Some(err) = result.get("ERROR").and_then(Value::as_str) {
        return Err(PayloadError::Rejected(err.to_string()));
    }
    let ids = match result.get("idlist") {
        Some(Value::Array(ids)) => ids,
        // eUtils omits idlist for some zero-hit responses.
        None => return Ok(Vec::new()),
        Some(other) => return Err(PayloadError::Malformed(format!("idlist is {other}"))),
    };
    ids.iter()
        .map(|id| match id.as_str() {
            Some(s) if is_valid_pmid(s) => Ok(s.to_string()),
            _ => Err(PayloadError::Malformed(format!("invalid PMID {id}"))),
        })
        .collect()
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Default)]
struct Partial {
    pmid: Option<String>,
    title: String,
    vernacular: String,
    abstracts: Vec<String>,
}

impl Partial {
    fn finish(self) -> Option<Article> {
        let pmid = self.pmid?;
        let mut title = collapse_ws(&self.title);
        if title.is_empty() {
            title = collapse_ws(&self.vernacular);
        }
        if title.is_empty() || !is_valid_pmid(&pmid) {
            return None;
        }
        let abstracts: Vec<String> = self
            .abstracts
            .iter()
            .map(|a| collapse_ws(a))
            .filter(|a| !a.is_empty())
            .collect();
        Some(Article {
            pmid,
            title,
            abstract_text: (!abstracts.is_empty()).then(|| abstracts.join(" ")),
        })
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Capture {
    None,
    Pmid,
    Title,
    Vernacular,
    Abstract,
}

/// Articles found in an efetch `retmode=xml` payload, in document order.
/// Records without a PMID or any title are skipped (the caller reports them
/// as missing).
pub fn parse_efetch(xml: &str) -> Result<Vec<Article>, PayloadError> {
    let mut reader = Reader::from_str(xml);
    reader.config_mut().check_end_names = true;
    let mut stack: Vec<String> = Vec::new();
    let mut current: Option<Partial> = None;
    let mut capture = Capture::None;
    let mut capture_depth = 0usize;
    let mut out = Vec::new();

    loop {
        let event = reader
            .read_event()
            .map_err(|e| PayloadError::Malformed(format!("at byte {}: {e}", reader.buffer_position())))?;
        match event {
            Event::Start(e) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                let parent = stack.last().map(String::as_str);
                match name.as_str() {
                    "PubmedArticle" | "PubmedBookArticle" => current = Some(Partial::default()),
                    "PMID" if matches!(parent, Some("MedlineCitation") | Some("BookDocument")) => {
                        if current.as_ref().is_some_and(|c| c.pmid.is_none()) {
                            capture = Capture::Pmid;
                            capture_depth = stack.len() + 1;
                            if let Some(c) = current.as_mut() {
                                c.pmid = Some(String::new());
                            }
                        }
                    }
                    "ArticleTitle" if current.is_some() && capture == Capture::None => {
                        capture = Capture::Title;
                        capture_depth = stack.len() + 1;
                    }
                    "VernacularTitle" if current.is_some() && capture == Capture::None => {
                        capture = Capture::Vernacular;
                        capture_depth = stack.len() + 1;
                    }
                    "AbstractText" if current.is_some() && capture == Capture::None => {
                        capture = Capture::Abstract;
                        capture_depth = stack.len() + 1;
                        if let Some(c) = current.as_mut() {
                            c.abstracts.push(String::new());
                        }
                    }
                    _ => {}
                }
                stack.push(name);
            }
            Event::End(e) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                // Inline markup such as <i> inside a title closes deeper than
                // the captured element and keeps the capture open.
                if capture != Capture::None && stack.len() == capture_depth {
                    capture = Capture::None;
                }
                stack.pop();
                if name == "PubmedArticle" || name == "PubmedBookArticle" {
                    if let Some(article) = current.take().and_then(Partial::finish) {
                        out.push(article);
                    }
                }
            }
            Event::Text(t) => {
                let text = t
                    .unescape()
                    .map_err(|e| PayloadError::Malformed(e.to_string()))?;
                append(&mut current, capture, &text);
            }
            Event::CData(t) => {
                let text = String::from_utf8_lossy(&t).into_owned();
                append(&mut current, capture, &text);
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !stack.is_empty() {
        return Err(PayloadError::Malformed(format!("unclosed element <{}>", stack.join("><"))));
    }
    Ok(out)
}

fn append(current: &mut Option<Partial>, capture: Capture, text: &str) {
    let Some(c) = current.as_mut() else { return };
    match capture {
        Capture::None => {}
        Capture::Pmid => {
            if let Some(p) = c.pmid.as_mut() {
                p.push_str(text.trim());
            }
        }
        Capture::Title => c.title.push_str(text),
        Capture::Vernacular => c.vernacular.push_str(text),
        Capture::Abstract => {
            if let Some(last) = c.abstracts.last_mut() {
                last.push_str(text);
            }
        }
    }
}

/// Minimal efetch-shaped XML for fixtures.
pub fn render_efetch(articles: &[Article]) -> String {
    use quick_xml::escape::escape;
    let mut xml = String::from(
        "<?xml version=\"1.0\" ?>\n<!DOCTYPE PubmedArticleSet>\n<PubmedArticleSet>\n",
    );
    for a in articles {
        xml.push_str("<PubmedArticle><MedlineCitation Status=\"MEDLINE\" Owner=\"NLM\">");
        xml.push_str(&format!("<PMID Version=\"1\">{}</PMID><Article>", escape(&a.pmid)));
        xml.push_str(&format!("<ArticleTitle>{}</ArticleTitle>", escape(&a.title)));
        if let Some(abs) = &a.abstract_text {
            xml.push_str(&format!(
                "<Abstract><AbstractText>{}</AbstractText></Abstract>",
                escape(abs)
            ));
        }
        xml.push_str("</Article></MedlineCitation></PubmedArticle>\n");
    }
    xml.push_str("</PubmedArticleSet>\n");
    xml
}

/// Minimal esearch-shaped JSON for fixtures.
pub fn render_esearch(ids: &[String]) -> String {
    serde_json::json!({
        "header": {"type": "esearch", "version": "0.3"},
        "esearchresult": {
            "count": ids.len().to_string(),
            "retmax": ids.len().to_string(),
            "retstart": "0",
            "idlist": ids,
        }
    })
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"<?xml version="1.0" ?>
<!DOCTYPE PubmedArticleSet PUBLIC "-//NLM//DTD PubMedArticle, 1st January 2023//EN" "https://dtd.nlm.nih.gov/ncbi/pubmed/out/pubmed_230101.dtd">
<PubmedArticleSet>
<PubmedArticle>
  <MedlineCitation Status="MEDLINE" Owner="NLM">
    <PMID Version="1">111</PMID>
    <Article PubModel="Print">
      <ArticleTitle>Trastuzumab targets <i>HER2</i> &amp; friends.</ArticleTitle>
      <Abstract>
        <AbstractText Label="BACKGROUND">First part.</AbstractText>
        <AbstractText Label="RESULTS">Second
          part.</AbstractText>
      </Abstract>
    </Article>
    <CommentsCorrectionsList>
      <CommentsCorrections RefType="Cites"><PMID Version="1">999</PMID></CommentsCorrections>
    </CommentsCorrectionsList>
  </MedlineCitation>
</PubmedArticle>
<PubmedArticle>
  <MedlineCitation><PMID Version="1">222</PMID><Article><ArticleTitle>No abstract here</ArticleTitle></Article></MedlineCitation>
</PubmedArticle>
</PubmedArticleSet>"#;

    #[test]
    fn efetch_sample() {
        let arts = parse_efetch(SAMPLE).unwrap();
        assert_eq!(arts.len(), 2);
        assert_eq!(arts[0].pmid, "111");
        assert_eq!(arts[0].title, "Trastuzumab targets HER2 & friends.");
        assert_eq!(arts[0].abstract_text.as_deref(), Some("First part. Second part."));
        assert_eq!(arts[1].pmid, "222");
        assert_eq!(arts[1].abstract_text, None);
    }

    #[test]
    fn efetch_malformed() {
        assert!(matches!(
            parse_efetch("<PubmedArticleSet><PubmedArticle>"),
            Err(PayloadError::Malformed(_))
        ));
        assert!(parse_efetch("<a></b>").is_err());
    }

    #[test]
    fn efetch_render_round_trip() {
        let arts = vec![
            Article {
                pmid: "5".into(),
                title: "A <b> & \"c\"".into(),
                abstract_text: Some("x < y".into()),
            },
            Article {
                pmid: "6".into(),
                title: "T".into(),
                abstract_text: None,
            },
        ];
        assert_eq!(parse_efetch(&render_efetch(&arts)).unwrap(), arts);
    }

    #[test]
    fn esearch_payloads() {
        let ok = r#"{"header":{},"esearchresult":{"count":"2","idlist":["111","222"]}}"#;
        assert_eq!(parse_esearch(ok).unwrap(), ["111", "222"]);
        let empty = r#"{"esearchresult":{"count":"0","retmax":"0","idlist":[]}}"#;
        assert!(parse_esearch(empty).unwrap().is_empty());
        let err = r#"{"esearchresult":{"ERROR":"Invalid query syntax"}}"#;
        assert!(matches!(parse_esearch(err), Err(PayloadError::Rejected(_))));
        assert!(matches!(parse_esearch(r#"{"error":"API key invalid"}"#), Err(PayloadError::Rejected(_))));
        assert!(matches!(parse_esearch("not json"), Err(PayloadError::Malformed(_))));
        assert!(matches!(
            parse_esearch(r#"{"esearchresult":{"idlist":["12x"]}}"#),
            Err(PayloadError::Malformed(_))
        ));
        let ids: Vec<String> = vec!["1".into(), "2".into()];
        assert_eq!(parse_esearch(&render_esearch(&ids)).unwrap(), ids);
    }
}
