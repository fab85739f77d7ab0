//! Word-level tokenization shared by templates, corpora and the toy vocabularies.

use std::ops::Range;

/// Byte spans of the words in `text`.
///
/// Words are maximal whitespace-free runs with leading and trailing
/// punctuation stripped; runs made only of punctuation are dropped.
pub fn word_spans(text: &str) -> Vec<Range<usize>> {
    whitespace_runs(text)
        .into_iter()
        .filter_map(|r| trim_punctuation(text, r))
        .collect()
}

/// Byte spans of maximal runs of non-whitespace characters.
pub fn whitespace_runs(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                spans.push(s..i);
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        spans.push(s..text.len());
    }
    spans
}

/// Narrows `span` to exclude leading and trailing non-alphanumeric characters.
pub fn trim_punctuation(text: &str, span: Range<usize>) -> Option<Range<usize>> {
    let raw = &text[span.clone()];
    let is_edge = |c: char| !c.is_alphanumeric();
    let lead = raw.len() - raw.trim_start_matches(is_edge).len();
    let trimmed = raw.trim_matches(is_edge);
    (!trimmed.is_empty()).then(|| span.start + lead..span.start + lead + trimmed.len())
}

/// Lowercased words of `text`.
pub fn words(text: &str) -> Vec<String> {
    word_spans(text)
        .into_iter()
        .map(|r| text[r].to_lowercase())
        .collect()
}

/// Position of the first contiguous occurrence of `needle` in `haystack`.
pub fn find_subsequence<S: PartialEq>(haystack: &[S], needle: &[S]) -> Option<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    haystack.windows(needle.len()).position(|w| w == needle)
}
