//! Lenient readers for model output.

use serde_json::Value;

use super::Verdict;
use crate::text::strip_code_fences;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("cannot read a yes/no verdict from {0:?}")]
    Unnormalizable(String),
    #[error("no JSON string array found in {0:?}")]
    MalformedAnswer(String),
}

fn preview(raw: &str) -> String {
    raw.chars().take(120).collect()
}

/// Lowercases, strips punctuation around each whitespace token, and returns
/// the first token that is exactly `yes` or `no`.
pub fn normalize_yesno(raw: &str) -> Result<Verdict, ParseError> {
    let lowered = raw.to_lowercase();
    lowered
        .split_whitespace()
        .map(|tok| tok.trim_matches(|c: char| !c.is_alphanumeric()))
        .find_map(|tok| match tok {
            "yes" => Some(Verdict::Yes),
            "no" => Some(Verdict::No),
            _ => None,
        })
        .ok_or_else(|| ParseError::Unnormalizable(preview(raw)))
}

/// First `[` ... matching `]`, skipping brackets inside string literals.
pub fn first_balanced_array(s: &str) -> Option<&str> {
    let start = s.find('[')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in s[start..].char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '[' => depth += 1,
            ']' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&s[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

fn strings_only(candidate: &str) -> Option<Vec<String>> {
    serde_json::from_str::<Vec<String>>(candidate.trim()).ok()
}

/// Scalars become strings; nulls are skipped; nested values reject the array.
fn coerced_scalars(candidate: &str) -> Option<Vec<String>> {
    let values: Vec<Value> = serde_json::from_str(candidate.trim()).ok()?;
    values
        .into_iter()
        .filter(|v| !v.is_null())
        .map(|v| match v {
            Value::String(s) => Some(s),
            Value::Number(n) => Some(n.to_string()),
            Value::Bool(b) => Some(b.to_string()),
            _ => None,
        })
        .collect()
}

/// Reads a JSON string array from a completion, trying in order: the raw
/// text, the text with code fences removed, the first balanced `[...]`, and
/// finally the same candidates with numbers/booleans stringified.
pub fn parse_json_string_array(raw: &str) -> Result<Vec<String>, ParseError> {
    let unfenced = strip_code_fences(raw);
    let mut candidates = vec![raw, unfenced];
    if let Some(arr) = first_balanced_array(unfenced) {
        candidates.push(arr);
    }
    let parsed = candidates
        .iter()
        .find_map(|c| strings_only(c))
        .or_else(|| candidates.iter().find_map(|c| coerced_scalars(c)))
        .ok_or_else(|| ParseError::MalformedAnswer(preview(raw)))?;
    Ok(parsed
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect())
}
