//! Small text utilities for cleaning model output.

/// Returns the body of the first Markdown code fence, or the input unchanged
/// when it contains no fence. An unterminated fence yields everything after
/// the opening line.
pub fn strip_code_fences(s: &str) -> &str {
    let Some(open) = s.find("```") else {
        return s;
    };
    let after_ticks = &s[open + 3..];
    // Skip an info string such as `json` up to the end of the line.
    let body_start = match after_ticks.find('\n') {
        Some(nl) => nl + 1,
        None => {
            // Single-line fence: ```foo```
            return after_ticks
                .find("```")
                .map(|close| &after_ticks[..close])
                .unwrap_or(after_ticks);
        }
    };
    let body = &after_ticks[body_start..];
    match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    }
}

/// Removes one pair of enclosing quotes when the quote character does not
/// occur inside, so `"a" OR "b"` is left alone.
pub fn strip_enclosing_quotes(s: &str) -> &str {
    for q in ['"', '\'', '`'] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            let inner = &s[1..s.len() - 1];
            if !inner.contains(q) {
                return inner;
            }
        }
    }
    s
}

/// Trim, unfence, trim, unquote, trim.
pub fn clean_completion(raw: &str) -> String {
    let unfenced = strip_code_fences(raw.trim()).trim();
    strip_enclosing_quotes(unfenced).trim().to_string()
}

/// Serializes a string list exactly like Python's `json.dumps(list)` with
/// default arguments: `", "` separators and ASCII-only `\uXXXX` escapes.
pub fn python_json_dumps(items: &[String]) -> String {
    let mut out = String::from("[");
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push('"');
        for c in item.chars() {
            match c {
                '"' => out.push_str("\\\""),
                '\\' => out.push_str("\\\\"),
                '\n' => out.push_str("\\n"),
                '\r' => out.push_str("\\r"),
                '\t' => out.push_str("\\t"),
                '\u{08}' => out.push_str("\\b"),
                '\u{0c}' => out.push_str("\\f"),
                c if (c as u32) < 0x20 || (c as u32) > 0x7e => {
                    let mut units = [0u16; 2];
                    for unit in c.encode_utf16(&mut units) {
                        out.push_str(&format!("\\u{:04x}", unit));
                    }
                }
                c => out.push(c),
            }
        }
        out.push('"');
    }
    out.push(']');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fences() {
        assert_eq!(strip_code_fences("```\nfoo AND bar\n```").trim(), "foo AND bar");
        assert_eq!(strip_code_fences("```json\n[1]\n```"), "[1]\n");
        assert_eq!(strip_code_fences("plain"), "plain");
        assert_eq!(strip_code_fences("```x```"), "x");
        assert_eq!(strip_code_fences("```\nopen"), "open");
    }

    #[test]
    fn quotes() {
        assert_eq!(strip_enclosing_quotes("'a AND b'"), "a AND b");
        assert_eq!(strip_enclosing_quotes("\"a\" OR \"b\""), "\"a\" OR \"b\"");
        assert_eq!(strip_enclosing_quotes("\""), "\"");
        assert_eq!(clean_completion("  ```\n'x OR y'\n```  "), "x OR y");
    }

    #[test]
    fn python_dumps_matches_reference() {
        // Reference values produced by CPython's json.dumps.
        assert_eq!(python_json_dumps(&[]), "[]");
        assert_eq!(
            python_json_dumps(&["TAC abdominal".into(), "ecografía".into()]),
            r#"["TAC abdominal", "ecograf\u00eda"]"#
        );
        assert_eq!(python_json_dumps(&["a\"b\\".into()]), r#"["a\"b\\"]"#);
        assert_eq!(python_json_dumps(&["😀".into()]), r#"["\ud83d\ude00"]"#);
    }
}
