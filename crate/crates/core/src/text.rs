//! Quote-aware text helpers shared by reply parsing and scoring.

/// Maps curly double quotes to `"`.
pub fn normalize_quotes(s: &str) -> String {
    s.chars().map(straighten).collect()
}

#[inline]
fn straighten(c: char) -> char {
    match c {
        '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{201F}' | '\u{2033}' | '\u{FF02}' => '"',
        other => other,
    }
}

#[inline]
fn is_quote(c: char) -> bool {
    straighten(c) == '"'
}

/// Byte length of the first sentence: everything up to and including the first
/// `.`, `!` or `?` that is not inside a quoted span. Whole string if none.
pub fn first_sentence_len(s: &str) -> usize {
    let mut in_quote = false;
    for (i, c) in s.char_indices() {
        if is_quote(c) {
            in_quote = !in_quote;
        } else if !in_quote && matches!(c, '.' | '!' | '?') {
            return i + c.len_utf8();
        }
    }
    s.len()
}

/// A quoted span located in the original (unnormalized) text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuoteSpan {
    /// Byte offset of the opening quote.
    pub open: usize,
    /// Byte offset of the closing quote.
    pub close: usize,
    pub open_len: usize,
    pub close_len: usize,
}

impl QuoteSpan {
    pub fn content<'a>(&self, s: &'a str) -> &'a str {
        &s[self.open + self.open_len..self.close]
    }

    pub fn end(&self) -> usize {
        self.close + self.close_len
    }
}

/// All matched quote pairs, left to right. A trailing unmatched quote is ignored.
pub fn quote_spans(s: &str) -> Vec<QuoteSpan> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    for (i, c) in s.char_indices() {
        if !is_quote(c) {
            continue;
        }
        match open.take() {
            None => open = Some((i, c.len_utf8())),
            Some((o, ol)) => spans.push(QuoteSpan {
                open: o,
                close: i,
                open_len: ol,
                close_len: c.len_utf8(),
            }),
        }
    }
    spans
}

/// First quoted span that lies inside the first sentence.
pub fn first_sentence_quote(s: &str) -> Option<QuoteSpan> {
    let limit = first_sentence_len(s);
    quote_spans(s).into_iter().next().filter(|q| q.end() <= limit)
}

/// Removes every quoted span, quotes included, replacing each with a space.
pub fn strip_quoted(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut last = 0;
    for q in quote_spans(s) {
        out.push_str(&s[last..q.open]);
        out.push(' ');
        last = q.end();
    }
    out.push_str(&s[last..]);
    out
}

/// Casefolds and splits on runs of non-alphanumeric characters.
pub fn tokenize(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}
