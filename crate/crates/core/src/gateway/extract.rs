//! Pulls the first JSON object or array out of free-form model output.

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractError {
    #[error("no JSON value found in model output")]
    NoJsonFound,
    #[error("malformed JSON starting at byte {0}")]
    MalformedJson(usize),
}

/// Finds the first well-formed JSON object or array in `text`.
///
/// Fenced code blocks are tried first (any language hint on the fence is
/// ignored), then every `{` / `[` position in the raw text. A candidate that
/// only fails because of trailing commas is accepted after removing them.
pub fn extract_json(text: &str) -> Result<Value, ExtractError> {
    let mut first_failure: Option<usize> = None;

    for (offset, block) in fenced_blocks(text) {
        match scan(block) {
            Ok(v) => return Ok(v),
            Err(ExtractError::MalformedJson(p)) => {
                first_failure.get_or_insert(offset + p);
            }
            Err(ExtractError::NoJsonFound) => {}
        }
    }
    match scan(text) {
        Ok(v) => Ok(v),
        Err(ExtractError::MalformedJson(p)) => Err(ExtractError::MalformedJson(first_failure.unwrap_or(p))),
        Err(ExtractError::NoJsonFound) => match first_failure {
            Some(p) => Err(ExtractError::MalformedJson(p)),
            None => Err(ExtractError::NoJsonFound),
        },
    }
}

fn scan(text: &str) -> Result<Value, ExtractError> {
    let mut first_failure = None;
    for (i, c) in text.char_indices() {
        if c != '{' && c != '[' {
            continue;
        }
        match parse_prefix(&text[i..]) {
            Some(v) => return Ok(v),
            None => {
                first_failure.get_or_insert(i);
            }
        }
    }
    match first_failure {
        Some(p) => Err(ExtractError::MalformedJson(p)),
        None => Err(ExtractError::NoJsonFound),
    }
}

/// Parses one JSON value from the start of `s`, ignoring whatever follows.
fn parse_prefix(s: &str) -> Option<Value> {
    let mut stream = serde_json::Deserializer::from_str(s).into_iter::<Value>();
    if let Some(Ok(v)) = stream.next() {
        return Some(v);
    }
    let relaxed = strip_trailing_commas(balanced_prefix(s)?);
    serde_json::from_str(&relaxed).ok()
}

/// The shortest prefix of `s` whose brackets balance, respecting strings.
fn balanced_prefix(s: &str) -> Option<&str> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if in_string {
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' | '[' => depth += 1,
            '}' | ']' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(&s[..i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

fn strip_trailing_commas(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut in_string = false;
    let mut escaped = false;
    let chars: Vec<char> = s.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            out.push(c);
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_string = false,
                _ => {}
            }
            continue;
        }
        if c == '"' {
            in_string = true;
        }
        if c == ',' {
            let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
            if matches!(next, Some('}') | Some(']')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

/// Contents of ``` fenced blocks with their byte offsets in `text`.
fn fenced_blocks(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut rest = 0;
    while let Some(open) = text[rest..].find("```") {
        let after_fence = rest + open + 3;
        // skip the language hint up to end of line
        let body_start = match text[after_fence..].find('\n') {
            Some(nl) => after_fence + nl + 1,
            None => break,
        };
        match text[body_start..].find("```") {
            Some(close) => {
                out.push((body_start, &text[body_start..body_start + close]));
                rest = body_start + close + 3;
            }
            None => {
                out.push((body_start, &text[body_start..]));
                break;
            }
        }
    }
    out
}
