//! Prediction files in the shared-task TSV layouts.

use std::collections::{BTreeMap, BTreeSet};

use super::{MedprocError, Mention};

pub const PROCEDURE_LABEL: &str = "PROCEDIMIENTO";
pub const NER_HEADER: &str = "filename\tlabel\tstart_span\tend_span\ttext";
pub const EL_HEADER: &str = "filename\tlabel\tstart_span\tend_span\ttext\tcode";
pub const INDEXING_HEADER: &str = "filename\tcodes";
/// Written in the code column for mentions that could not be linked.
pub const NO_CODE: &str = "NO_CODE";

fn row(m: &Mention) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}",
        m.document_id, PROCEDURE_LABEL, m.start, m.end, m.text
    )
}

pub fn render_ner_tsv(mentions: &[Mention]) -> String {
    let mut out = format!("{NER_HEADER}\n");
    for m in mentions {
        out.push_str(&row(m));
        out.push('\n');
    }
    out
}

pub fn render_el_tsv(mentions: &[Mention]) -> String {
    let mut out = format!("{EL_HEADER}\n");
    for m in mentions {
        out.push_str(&row(m));
        out.push('\t');
        out.push_str(m.code.as_deref().unwrap_or(NO_CODE));
        out.push('\n');
    }
    out
}

/// One row per document; codes joined with `+`.
pub fn render_indexing_tsv(index: &BTreeMap<String, BTreeSet<String>>) -> String {
    let mut out = format!("{INDEXING_HEADER}\n");
    for (doc, codes) in index {
        out.push_str(doc);
        out.push('\t');
        out.push_str(&codes.iter().map(String::as_str).collect::<Vec<_>>().join("+"));
        out.push('\n');
    }
    out
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .from_reader(text.as_bytes())
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, MedprocError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| MedprocError::MissingColumn(name.to_string()))
}

/// Reads an NER or EL prediction/gold file. The code column is optional.
pub fn parse_mentions_tsv(text: &str) -> Result<Vec<Mention>, MedprocError> {
    let mut rdr = reader(text);
    let headers = rdr.headers().map_err(|e| MedprocError::Tsv(e.to_string()))?.clone();
    let file_at = column(&headers, "filename")?;
    let start_at = column(&headers, "start_span")?;
    let end_at = column(&headers, "end_span")?;
    let text_at = column(&headers, "text")?;
    let code_at = column(&headers, "code").ok();
    let mut out = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| MedprocError::Tsv(e.to_string()))?;
        let get = |i: usize| {
            record
                .get(i)
                .ok_or_else(|| MedprocError::Tsv(format!("row {} is short", line + 2)))
        };
        let offset = |i: usize| -> Result<usize, MedprocError> {
            get(i)?
                .trim()
                .parse()
                .map_err(|_| MedprocError::Tsv(format!("row {}: bad offset", line + 2)))
        };
        let (start, end) = (offset(start_at)?, offset(end_at)?);
        if start >= end {
            return Err(MedprocError::Tsv(format!("row {}: empty span", line + 2)));
        }
        let code = match code_at {
            Some(i) => Some(get(i)?.trim().to_string()).filter(|c| !c.is_empty() && c != NO_CODE),
            None => None,
        };
        out.push(Mention {
            document_id: get(file_at)?.to_string(),
            start,
            end,
            text: get(text_at)?.to_string(),
            code,
        });
    }
    Ok(out)
}

pub fn parse_indexing_tsv(text: &str) -> Result<BTreeMap<String, BTreeSet<String>>, MedprocError> {
    let mut rdr = reader(text);
    let headers = rdr.headers().map_err(|e| MedprocError::Tsv(e.to_string()))?.clone();
    let file_at = column(&headers, "filename")?;
    let codes_at = column(&headers, "codes")?;
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| MedprocError::Tsv(e.to_string()))?;
        let doc = record.get(file_at).unwrap_or("").to_string();
        let codes = record
            .get(codes_at)
            .unwrap_or("")
            .split('+')
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(str::to_string);
        out.entry(doc).or_default().extend(codes);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mention(doc: &str, start: usize, end: usize, text: &str, code: Option<&str>) -> Mention {
        Mention {
            document_id: doc.into(),
            start,
            end,
            text: text.into(),
            code: code.map(str::to_string),
        }
    }

    #[test]
    fn ner_and_el_round_trip() {
        let ms = vec![
            mention("caso1", 17, 30, "TAC abdominal", Some("169070004")),
            mention("caso1", 40, 49, "ecografía", None),
        ];
        let ner = render_ner_tsv(&ms);
        assert!(ner.starts_with(NER_HEADER));
        assert!(ner.contains("caso1\tPROCEDIMIENTO\t17\t30\tTAC abdominal\n"));
        let back = parse_mentions_tsv(&ner).unwrap();
        assert_eq!(back[0].code, None);
        assert_eq!(back[0].text, "TAC abdominal");

        let el = render_el_tsv(&ms);
        assert_eq!(parse_mentions_tsv(&el).unwrap(), ms);
    }

    #[test]
    fn indexing_round_trip() {
        let mut index = BTreeMap::new();
        index.insert("a".to_string(), BTreeSet::from(["1".to_string(), "2".to_string()]));
        index.insert("b".to_string(), BTreeSet::new());
        let text = render_indexing_tsv(&index);
        assert!(text.contains("a\t1+2\n"));
        assert_eq!(parse_indexing_tsv(&text).unwrap(), index);
    }

    #[test]
    fn bad_rows_are_rejected() {
        assert!(parse_mentions_tsv("filename\tstart_span\tend_span\ttext\nd\tx\t3\tt\n").is_err());
        assert!(parse_mentions_tsv("filename\tstart_span\tend_span\ttext\nd\t3\t3\tt\n").is_err());
        assert!(matches!(
            parse_mentions_tsv("filename\ttext\n"),
            Err(MedprocError::MissingColumn(_))
        ));
    }
}
