//! Rule-based sentence segmentation of raw reasoning traces.
//!
//! A sentence ends at `.`, `!` or `?` (optionally followed by closing quotes
//! or brackets) when whitespace and then an uppercase letter follow, possibly
//! behind an opening quote or bracket. Every
//! line break also ends a sentence. Periods closing a known abbreviation or a
//! dotted initialism (`e.g.`, `U.S.`) never split, and nothing inside a math
//! span (`$..$`, `$$..$$`, `\(..\)`, `\[..\]`) splits. Math spans must close on
//! the same line; an unmatched `$` is treated as a currency sign.

const ABBREVIATIONS: &[&str] = &[
    "e.g.", "i.e.", "etc.", "vs.", "cf.", "dr.", "mr.", "mrs.", "ms.", "prof.", "st.", "jr.", "sr.",
    "eq.", "eqs.", "fig.", "figs.", "sec.", "approx.", "resp.", "ref.", "refs.", "vol.",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '\u{201d}', '\u{2019}'];
const OPENERS: &[char] = &['"', '\'', '(', '[', '\u{201c}', '\u{2018}'];

/// Splits `trace` into whitespace-collapsed, non-empty sentences.
pub fn segment(trace: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in trace.lines() {
        let chars: Vec<char> = line.chars().collect();
        let mut start = 0;
        for cut in boundaries(&chars) {
            push_collapsed(&mut out, &chars[start..cut]);
            start = cut;
        }
        push_collapsed(&mut out, &chars[start..]);
    }
    out
}

/// Collapses every whitespace run to one space and trims the ends.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn push_collapsed(out: &mut Vec<String>, chars: &[char]) {
    let s: String = chars.iter().collect();
    let collapsed = collapse_whitespace(&s);
    if !collapsed.is_empty() {
        out.push(collapsed);
    }
}

/// Offsets within one line where a new sentence begins.
fn boundaries(chars: &[char]) -> Vec<usize> {
    let mut cuts = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if let Some(end) = math_span_end(chars, i) {
            i = end;
            continue;
        }
        let c = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && CLOSERS.contains(&chars[j]) {
                j += 1;
            }
            let mut k = j;
            while k < chars.len() && chars[k].is_whitespace() {
                k += 1;
            }
            let mut u = k;
            while u < chars.len() && OPENERS.contains(&chars[u]) {
                u += 1;
            }
            if k > j && u < chars.len() && chars[u].is_uppercase() && !(c == '.' && ends_abbreviation(chars, i)) {
                cuts.push(k);
                i = k;
                continue;
            }
        }
        i += 1;
    }
    cuts
}

/// If a math span opens at `i` and closes later on the line, the offset just
/// past its closing delimiter.
fn math_span_end(chars: &[char], i: usize) -> Option<usize> {
    let rest = &chars[i..];
    let (open_len, close): (usize, &[char]) = match rest {
        ['$', '$', ..] => (2, &['$', '$']),
        ['$', next, ..] if !next.is_whitespace() && !next.is_ascii_digit() => (1, &['$']),
        ['\\', '(', ..] => (2, &['\\', ')']),
        ['\\', '[', ..] => (2, &['\\', ']']),
        _ => return None,
    };
    let body = &chars[i + open_len..];
    body.windows(close.len())
        .position(|w| w == close)
        .map(|p| i + open_len + p + close.len())
}

/// Whether the period at `dot` closes an abbreviation.
fn ends_abbreviation(chars: &[char], dot: usize) -> bool {
    let start = chars[..dot]
        .iter()
        .rposition(|c| c.is_whitespace())
        .map_or(0, |p| p + 1);
    let token: String = chars[start..=dot]
        .iter()
        .skip_while(|c| matches!(c, '(' | '[' | '"' | '\'' | '\u{201c}' | '\u{2018}'))
        .collect::<String>()
        .to_lowercase();
    ABBREVIATIONS.contains(&token.as_str()) || is_initialism(&token)
}

/// Two or more `letter.` groups, like `u.s.` or `p.m.`.
fn is_initialism(token: &str) -> bool {
    let chars: Vec<char> = token.chars().collect();
    chars.len() >= 4
        && chars.len().is_multiple_of(2)
        && chars
            .chunks(2)
            .all(|pair| pair[0].is_alphabetic() && pair[1] == '.')
}
