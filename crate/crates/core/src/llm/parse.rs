//! Extraction of list and JSON-object payloads from free-form model output.
//!
//! Models wrap their answers in code fences, add prose, and use single
//! quotes. The extractors here locate the first bracketed payload with a
//! quote-aware scan and then decode it, falling back to looser readings
//! before giving up with a typed [`ParseError`].

use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no list found in model output")]
    NoListFound,
    #[error("unbalanced brackets in model output")]
    Unbalanced,
    #[error("no JSON object found in model output")]
    NoObjectFound,
    #[error("JSON object is missing required key {0:?}")]
    MissingKey(String),
    #[error("malformed JSON: {0}")]
    Malformed(String),
}

/// Characters that may precede a single-quoted string literal.
fn opens_single(prev: Option<char>) -> bool {
    matches!(prev, Some('[') | Some(',') | Some('{') | Some(':'))
}

fn closes_single(rest: &str) -> bool {
    match rest.trim_start().chars().next() {
        None => true,
        Some(c) => matches!(c, ',' | ']' | '}' | ':'),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Quote {
    None,
    Double,
    Single,
}

/// Byte offsets and characters that sit outside string literals.
fn structural(text: &str) -> Vec<(usize, char)> {
    let mut out = Vec::new();
    let mut quote = Quote::None;
    let mut escaped = false;
    let mut prev: Option<char> = None;
    for (i, c) in text.char_indices() {
        match quote {
            Quote::Double => {
                if escaped {
                    escaped = false;
                } else if c == '\\' {
                    escaped = true;
                } else if c == '"' {
                    quote = Quote::None;
                }
            }
            Quote::Single => {
                if escaped {
                    escaped = false;
                } else if c == '\\' {
                    escaped = true;
                } else if c == '\'' && closes_single(&text[i + 1..]) {
                    quote = Quote::None;
                }
            }
            Quote::None => {
                if c == '"' {
                    quote = Quote::Double;
                } else if c == '\'' && opens_single(prev) {
                    quote = Quote::Single;
                } else {
                    out.push((i, c));
                }
                if !c.is_whitespace() {
                    prev = Some(c);
                }
            }
        }
    }
    out
}

/// Find the span `[open_at, close]` of the bracket opened at `open_at`.
fn balanced_end(text: &str, open_at: usize, open: char, close: char) -> Option<usize> {
    let mut depth = 0usize;
    for (i, c) in structural(&text[open_at..]) {
        if c == open {
            depth += 1;
        } else if c == close {
            depth -= 1;
            if depth == 0 {
                return Some(open_at + i);
            }
        }
    }
    None
}

/// Rewrite single-quoted string literals as double-quoted JSON strings.
pub(crate) fn normalize_quotes(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut quote = Quote::None;
    let mut escaped = false;
    let mut prev: Option<char> = None;
    for (i, c) in text.char_indices() {
        match quote {
            Quote::Double => {
                out.push(c);
                if escaped {
                    escaped = false;
                } else if c == '\\' {
                    escaped = true;
                } else if c == '"' {
                    quote = Quote::None;
                }
            }
            Quote::Single => {
                if escaped {
                    escaped = false;
                    if c == '\'' {
                        out.push('\'');
                    } else {
                        out.push('\\');
                        out.push(c);
                    }
                } else if c == '\\' {
                    escaped = true;
                } else if c == '\'' && closes_single(&text[i + 1..]) {
                    out.push('"');
                    quote = Quote::None;
                } else if c == '"' {
                    out.push_str("\\\"");
                } else {
                    out.push(c);
                }
            }
            Quote::None => {
                if c == '"' {
                    quote = Quote::Double;
                    out.push(c);
                } else if c == '\'' && opens_single(prev) {
                    quote = Quote::Single;
                    out.push('"');
                } else {
                    out.push(c);
                }
                if !c.is_whitespace() {
                    prev = Some(c);
                }
            }
        }
    }
    out
}

fn value_to_item(v: &Value) -> String {
    match v {
        Value::String(s) => s.trim().to_string(),
        other => other.to_string(),
    }
}

/// Split the inside of `[...]` on top-level commas and strip quotes.
fn split_loose(inner: &str) -> Vec<String> {
    let mut items = Vec::new();
    let mut start = 0;
    let mut depth = 0i32;
    for (i, c) in structural(inner) {
        match c {
            '[' | '{' => depth += 1,
            ']' | '}' => depth -= 1,
            ',' if depth == 0 => {
                items.push(&inner[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    items.push(&inner[start..]);
    items
        .into_iter()
        .map(|raw| {
            let t = raw.trim();
            let t = t
                .strip_prefix('"')
                .and_then(|s| s.strip_suffix('"'))
                .or_else(|| t.strip_prefix('\'').and_then(|s| s.strip_suffix('\'')))
                .unwrap_or(t);
            t.trim().to_string()
        })
        .filter(|s| !s.is_empty())
        .collect()
}

/// Extract the first bracketed list from model output.
pub fn parse_list(text: &str) -> Result<Vec<String>, ParseError> {
    let start = structural(text)
        .into_iter()
        .find(|&(_, c)| c == '[')
        .map(|(i, _)| i)
        .ok_or(ParseError::NoListFound)?;
    let end = balanced_end(text, start, '[', ']').ok_or(ParseError::Unbalanced)?;
    let span = &text[start..=end];
    if let Ok(items) = serde_json::from_str::<Vec<Value>>(span) {
        return Ok(items.iter().map(value_to_item).collect());
    }
    if let Ok(items) = serde_json::from_str::<Vec<Value>>(&normalize_quotes(span)) {
        return Ok(items.iter().map(value_to_item).collect());
    }
    Ok(split_loose(&span[1..span.len() - 1]))
}

/// Extract the first JSON object from model output, without key checks.
pub fn extract_json_object(text: &str) -> Result<Map<String, Value>, ParseError> {
    let mut last_error: Option<ParseError> = None;
    let opens: Vec<usize> = structural(text)
        .into_iter()
        .filter(|&(_, c)| c == '{')
        .map(|(i, _)| i)
        .collect();
    if opens.is_empty() {
        return Err(ParseError::NoObjectFound);
    }
    for start in opens {
        let Some(end) = balanced_end(text, start, '{', '}') else {
            last_error.get_or_insert(ParseError::Malformed("unbalanced braces".into()));
            continue;
        };
        let span = &text[start..=end];
        let parsed = serde_json::from_str::<Map<String, Value>>(span)
            .or_else(|_| serde_json::from_str::<Map<String, Value>>(&normalize_quotes(span)));
        match parsed {
            Ok(map) => return Ok(map),
            Err(e) => {
                last_error.get_or_insert(ParseError::Malformed(e.to_string()));
            }
        }
    }
    Err(last_error.unwrap_or(ParseError::NoObjectFound))
}

/// Extract the first JSON object and require every key in `required`
/// (case-sensitive). The first missing key is reported.
pub fn parse_json_object(text: &str, required: &[&str]) -> Result<Map<String, Value>, ParseError> {
    let map = extract_json_object(text)?;
    if let Some(missing) = required.iter().find(|k| !map.contains_key(**k)) {
        return Err(ParseError::MissingKey(missing.to_string()));
    }
    Ok(map)
}

/// Read "Yes"/"No"/`true`/`false` style values as booleans.
pub fn normalize_bool(value: &Value) -> Option<bool> {
    match value {
        Value::Bool(b) => Some(*b),
        Value::Number(n) => n.as_i64().map(|n| n != 0),
        Value::String(s) => match s.trim().trim_end_matches('.').to_ascii_lowercase().as_str() {
            "yes" | "y" | "true" => Some(true),
            "no" | "n" | "false" => Some(false),
            _ => None,
        },
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    #[test]
    fn plain_list() {
        assert_eq!(parse_list(r#"["a", "b"]"#).unwrap(), vec!["a", "b"]);
    }

    #[test]
    fn fenced_list() {
        assert_eq!(parse_list("```\n[\"x\"]\n```").unwrap(), vec!["x"]);
        assert_eq!(
            parse_list("Sure! Here you go:\n```json\n[\"x\", \"y\"]\n```\nHope it helps").unwrap(),
            vec!["x", "y"]
        );
    }

    #[test]
    fn no_list() {
        assert_eq!(parse_list("I think: none"), Err(ParseError::NoListFound));
    }

    #[test]
    fn unbalanced_list() {
        assert_eq!(parse_list(r#"["a", "b""#), Err(ParseError::Unbalanced));
    }

    #[test]
    fn single_quotes_and_apostrophes() {
        assert_eq!(
            parse_list("['Debussy's music', 'Ballet']").unwrap(),
            vec!["Debussy's music", "Ballet"]
        );
        assert_eq!(
            parse_list(r#"["Debussy's music", 'say "hi"']"#).unwrap(),
            vec!["Debussy's music", "say \"hi\""]
        );
    }

    #[test]
    fn bare_items() {
        assert_eq!(
            parse_list("[Panama, Ballet ,  Juan Carlos Varela]").unwrap(),
            vec!["Panama", "Ballet", "Juan Carlos Varela"]
        );
        assert!(parse_list("[]").unwrap().is_empty());
    }

    #[test]
    fn brackets_inside_strings() {
        assert_eq!(parse_list(r#"["a]b", "c"]"#).unwrap(), vec!["a]b", "c"]);
    }

    #[test]
    fn answer_object() {
        let m =
            parse_json_object(r#"{"A": "Juan Carlos Varela", "R": "..."}"#, &["A", "R"]).unwrap();
        assert_eq!(m["A"], "Juan Carlos Varela");
        assert!(m.contains_key("R"));
    }

    #[test]
    fn missing_reason_key() {
        assert_eq!(
            parse_json_object(r#"{"Add": "Yes"}"#, &["Add", "Reason"]),
            Err(ParseError::MissingKey("Reason".to_string()))
        );
    }

    #[test]
    fn keys_are_case_sensitive() {
        assert_eq!(
            parse_json_object(r#"{"a": 1, "R": 2}"#, &["A", "R"]),
            Err(ParseError::MissingKey("A".to_string()))
        );
    }

    #[test]
    fn no_object() {
        assert_eq!(
            parse_json_object("no json here", &["A"]),
            Err(ParseError::NoObjectFound)
        );
    }

    #[test]
    fn malformed_object() {
        assert!(matches!(
            parse_json_object("{A: }", &["A"]),
            Err(ParseError::Malformed(_))
        ));
        assert!(matches!(
            parse_json_object("{\"A\": 1", &["A"]),
            Err(ParseError::Malformed(_))
        ));
    }

    #[test]
    fn object_after_prose_with_braces() {
        let m = parse_json_object(
            "The {format} is below.\n```json\n{'Add': 'No', 'Reason': \"it's fine\"}\n```",
            &["Add", "Reason"],
        )
        .unwrap();
        assert_eq!(m["Add"], "No");
        assert_eq!(m["Reason"], "it's fine");
    }

    #[test]
    fn bools() {
        assert_eq!(normalize_bool(&json!("Yes")), Some(true));
        assert_eq!(normalize_bool(&json!(" no. ")), Some(false));
        assert_eq!(normalize_bool(&json!(true)), Some(true));
        assert_eq!(normalize_bool(&json!("maybe")), None);
        assert_eq!(normalize_bool(&json!(null)), None);
    }

    proptest! {
        #[test]
        fn rendered_lists_round_trip(items in proptest::collection::vec("\\PC{0,12}", 0..6)) {
            let items: Vec<String> = items
                .into_iter()
                .map(|s| s.trim().to_string())
                .filter(|s| !s.contains("```"))
                .collect();
            let rendered = serde_json::to_string(&items).unwrap();
            prop_assert_eq!(parse_list(&rendered).unwrap(), items);
        }

        #[test]
        fn object_parser_never_panics(text in "\\PC{0,64}") {
            let _ = parse_json_object(&text, &["A", "R"]);
            let _ = parse_list(&text);
        }
    }
}
