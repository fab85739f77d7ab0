use std::collections::HashMap;

use super::{SpecialTokens, TokenId, TokenSequence};
use crate::text;

pub const UNKNOWN: &str = "<unk>";
pub const SEQUENCE_START: &str = "<s>";
pub const CLS: &str = "<cls>";
pub const SEP: &str = "<sep>";
pub const END_OF_TERM: &str = "</t>";

const SPECIALS: [&str; 5] = [UNKNOWN, SEQUENCE_START, CLS, SEP, END_OF_TERM];

/// Lowercased whitespace/punctuation word vocabulary.
///
/// Ordinary words take ids `0..n` in insertion order; the five special
/// tokens follow. Out-of-vocabulary words map to `<unk>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordVocab {
    words: Vec<String>,
    index: HashMap<String, TokenId>,
    special: SpecialTokens,
}

impl WordVocab {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab_words: Vec<String> = Vec::new();
        let mut index = HashMap::new();
        for w in words {
            let w = w.as_ref().trim().to_lowercase();
            if w.is_empty() || SPECIALS.contains(&w.as_str()) || index.contains_key(&w) {
                continue;
            }
            index.insert(w.clone(), vocab_words.len() as TokenId);
            vocab_words.push(w);
        }
        let base = vocab_words.len() as TokenId;
        for (i, s) in SPECIALS.iter().enumerate() {
            index.insert((*s).to_string(), base + i as TokenId);
            vocab_words.push((*s).to_string());
        }
        WordVocab {
            words: vocab_words,
            index,
            special: SpecialTokens {
                unknown: base,
                sequence_start: base + 1,
                cls: base + 2,
                sep: base + 3,
                end_of_term: base + 4,
            },
        }
    }

    /// Vocabulary over every word appearing in `texts`, in first-appearance order.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        Self::new(texts.into_iter().flat_map(text::words))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn special(&self) -> SpecialTokens {
        self.special
    }

    /// Ordinary (non-special) words in id order.
    pub fn plain_words(&self) -> &[String] {
        &self.words[..self.special.unknown as usize]
    }

    pub fn id(&self, word: &str) -> Option<TokenId> {
        self.index.get(&word.to_lowercase()).copied()
    }

    pub fn word(&self, id: TokenId) -> &str {
        &self.words[id as usize]
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        id >= self.special.unknown
    }

    pub fn tokenize(&self, input: &str) -> TokenSequence {
        let mut seq = TokenSequence::default();
        for run in text::whitespace_runs(input) {
            let raw = &input[run.clone()];
            if let Some(&id) = SPECIALS.contains(&raw).then(|| &self.index[raw]) {
                seq.ids.push(id);
                seq.offsets.push(run);
            } else if let Some(span) = text::trim_punctuation(input, run) {
                let w = input[span.clone()].to_lowercase();
                seq.ids.push(self.index.get(&w).copied().unwrap_or(self.special.unknown));
                seq.offsets.push(span);
            }
        }
        seq
    }

    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&id| self.words.get(id as usize).map_or(UNKNOWN, String::as_str))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
