//! Sentence corpus, term index and overlap-ranked evidence selection.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;
use crate::triple::{rephrase_relation, render_template, LabeledTriple, RelationPhrase};

/// Per-term cap applied before pairing; the highest sentence ids are kept.
pub const DEFAULT_PER_TERM_LIMIT: usize = 1000;

const DEFAULT_STOPWORDS: &str = include_str!("stopwords.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub id: usize,
    pub text: String,
    pub tokens: Vec<String>,
}

/// Immutable sentence store with an inverted index from lowercased word to sentence ids.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    sentences: Vec<Sentence>,
    term_index: HashMap<String, Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitMode {
    /// Split after `.`, `!` or `?` followed by whitespace or end of input.
    #[default]
    Punctuation,
    /// Every non-empty line is one sentence.
    Lines,
}

impl std::str::FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "punctuation" => Ok(SplitMode::Punctuation),
            "lines" => Ok(SplitMode::Lines),
            other => Err(Error::invalid(format!("unknown split mode {other:?}"))),
        }
    }
}

/// Splits `input` into sentence strings with whitespace collapsed.
pub fn split_sentences(input: &str, mode: SplitMode) -> Vec<String> {
    let raw: Vec<&str> = match mode {
        SplitMode::Lines => input.lines().collect(),
        SplitMode::Punctuation => {
            let mut out = Vec::new();
            let mut start = 0;
            let mut chars = input.char_indices().peekable();
            while let Some((i, c)) = chars.next() {
                if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|&(_, n)| n.is_whitespace()) {
                    let end = i + c.len_utf8();
                    out.push(&input[start..end]);
                    start = end;
                }
            }
            out.push(&input[start..]);
            out
        }
    };
    raw.into_iter()
        .map(|s| s.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|s| !s.is_empty())
        .collect()
}

impl Corpus {
    pub fn ingest(input: &str, mode: SplitMode) -> Self {
        Self::from_sentences(split_sentences(input, mode))
    }

    pub fn ingest_reader<R: BufRead>(mut reader: R, mode: SplitMode) -> Result<Self> {
        let mut input = String::new();
        reader.read_to_string(&mut input)?;
        Ok(Self::ingest(&input, mode))
    }

    pub fn from_sentences<I: IntoIterator<Item = String>>(texts: I) -> Self {
        let mut corpus = Corpus::default();
        for text in texts {
            let id = corpus.sentences.len();
            let tokens = text::words(&text);
            for t in tokens.iter().collect::<BTreeSet<_>>() {
                corpus.term_index.entry(t.clone()).or_default().push(id);
            }
            corpus.sentences.push(Sentence { id, text, tokens });
        }
        corpus
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn sentence(&self, id: usize) -> Option<&Sentence> {
        self.sentences.get(id)
    }

    /// Ids of sentences that contain the lowercased word `token`, ascending.
    pub fn ids_with_token(&self, token: &str) -> &[usize] {
        self.term_index.get(token).map_or(&[], Vec::as_slice)
    }

    /// Ids (ascending) of sentences containing every word of `term` contiguously.
    pub fn find_sentences(&self, term: &str) -> Vec<usize> {
        let needle = text::words(term);
        let Some(rarest) = needle.iter().min_by_key(|w| self.ids_with_token(w).len()) else {
            return Vec::new();
        };
        self.ids_with_token(rarest)
            .iter()
            .copied()
            .filter(|&id| text::find_subsequence(&self.sentences[id].tokens, &needle).is_some())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    pub fn new<I: IntoIterator<Item = S>, S: AsRef<str>>(words: I) -> Self {
        Stopwords(
            words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty() && !w.starts_with('#'))
                .collect(),
        )
    }

    /// The bundled list of common English function words.
    pub fn english() -> Self {
        Self::new(DEFAULT_STOPWORDS.lines())
    }

    /// One word per line; blank lines and `#` comments are ignored.
    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let lines = reader.lines().collect::<std::io::Result<Vec<_>>>()?;
        Ok(Self::new(lines))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn content_set<'s>(tokens: &'s [String], stopwords: &Stopwords) -> Vec<&'s str> {
    let set: BTreeSet<&str> = tokens
        .iter()
        .map(|t| t.as_str())
        .filter(|t| !stopwords.contains(t))
        .collect();
    set.into_iter().collect()
}

fn sorted_intersection_len(a: &[&str], b: &[&str]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Number of distinct non-stopword lowercased tokens shared by `s1` and `s2`.
pub fn overlap_score(s1: &[String], s2: &[String], stopwords: &Stopwords) -> usize {
    let lower = |s: &[String]| s.iter().map(|t| t.to_lowercase()).collect::<Vec<_>>();
    let (a, b) = (lower(s1), lower(s2));
    sorted_intersection_len(&content_set(&a, stopwords), &content_set(&b, stopwords))
}

/// One head sentence and one tail sentence offered as evidence for a triple.
///
/// Sentence ids are absent for the template fallback pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvidencePair {
    pub head_sentence_id: Option<usize>,
    pub tail_sentence_id: Option<usize>,
    pub head_sentence: String,
    pub tail_sentence: String,
    pub overlap: usize,
    pub relation_phrase: RelationPhrase,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvidenceSet {
    pub triple: LabeledTriple,
    pub pairs: Vec<EvidencePair>,
    pub fallback_used: bool,
}

impl EvidenceSet {
    /// A single pair of template sentences, used when the corpus has no evidence.
    pub fn fallback(triple: &LabeledTriple) -> Result<Self> {
        let sentence = render_template(triple).text;
        Ok(EvidenceSet {
            triple: triple.clone(),
            pairs: vec![EvidencePair {
                head_sentence_id: None,
                tail_sentence_id: None,
                head_sentence: sentence.clone(),
                tail_sentence: sentence,
                overlap: 0,
                relation_phrase: rephrase_relation(&triple.relation)?,
            }],
            fallback_used: true,
        })
    }

    pub fn to_records(&self) -> Vec<EvidenceRecord> {
        self.pairs
            .iter()
            .enumerate()
            .map(|(k, p)| EvidenceRecord {
                head: self.triple.head.clone(),
                relation: self.triple.relation.clone(),
                tail: self.triple.tail.clone(),
                rank_k: k + 1,
                head_sentence_id: p.head_sentence_id,
                tail_sentence_id: p.tail_sentence_id,
                overlap: p.overlap,
                fallback_used: self.fallback_used,
            })
            .collect()
    }
}

/// One line of the evidence output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub rank_k: usize,
    pub head_sentence_id: Option<usize>,
    pub tail_sentence_id: Option<usize>,
    pub overlap: usize,
    pub fallback_used: bool,
}

/// Rebuilds evidence sets from records, grouping consecutive records of the same triple.
pub fn evidence_from_records(records: &[EvidenceRecord], corpus: &Corpus) -> Result<Vec<EvidenceSet>> {
    let mut out: Vec<EvidenceSet> = Vec::new();
    for r in records {
        let triple = LabeledTriple::new(&r.head, &r.relation, &r.tail)?;
        let same = out.last().is_some_and(|s| s.triple == triple && r.rank_k == s.pairs.len() + 1);
        if !same {
            if r.rank_k != 1 {
                return Err(Error::invalid(format!("evidence for {triple} does not start at rank 1")));
            }
            out.push(EvidenceSet {
                triple: triple.clone(),
                pairs: Vec::new(),
                fallback_used: r.fallback_used,
            });
        }
        let set = out.last_mut().expect("pushed above");
        if r.fallback_used {
            set.pairs.extend(EvidenceSet::fallback(&triple)?.pairs);
            continue;
        }
        let text = |id: Option<usize>| -> Result<String> {
            id.and_then(|i| corpus.sentence(i))
                .map(|s| s.text.clone())
                .ok_or_else(|| Error::invalid(format!("evidence for {triple} names a missing sentence {id:?}")))
        };
        set.pairs.push(EvidencePair {
            head_sentence_id: r.head_sentence_id,
            tail_sentence_id: r.tail_sentence_id,
            head_sentence: text(r.head_sentence_id)?,
            tail_sentence: text(r.tail_sentence_id)?,
            overlap: r.overlap,
            relation_phrase: rephrase_relation(&triple.relation)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct EvidenceSelector {
    pub k: usize,
    pub stopwords: Stopwords,
    pub per_term_limit: usize,
}

impl EvidenceSelector {
    pub fn new(k: usize, stopwords: Stopwords) -> Result<Self> {
        if k < 1 {
            return Err(Error::invalid("K must be at least 1"));
        }
        Ok(EvidenceSelector {
            k,
            stopwords,
            per_term_limit: DEFAULT_PER_TERM_LIMIT,
        })
    }

    pub fn with_per_term_limit(mut self, limit: usize) -> Self {
        self.per_term_limit = limit;
        self
    }

    fn candidates(&self, corpus: &Corpus, term: &str) -> Vec<usize> {
        let ids = corpus.find_sentences(term);
        let skip = ids.len().saturating_sub(self.per_term_limit);
        ids[skip..].to_vec()
    }

    /// Top-K pairs by (overlap desc, head id asc, tail id asc); falls back to the template when empty.
    pub fn select(&self, triple: &LabeledTriple, corpus: &Corpus) -> Result<EvidenceSet> {
        let heads = self.candidates(corpus, &triple.head);
        let tails = self.candidates(corpus, &triple.tail);
        if heads.is_empty() || tails.is_empty() {
            return EvidenceSet::fallback(triple);
        }
        let content: HashMap<usize, Vec<&str>> = heads
            .iter()
            .chain(&tails)
            .map(|&id| (id, content_set(&corpus.sentences[id].tokens, &self.stopwords)))
            .collect();

        let mut scored = Vec::with_capacity(heads.len() * tails.len());
        for &h in &heads {
            for &t in &tails {
                scored.push((sorted_intersection_len(&content[&h], &content[&t]), h, t));
            }
        }
        let key = |&(o, h, t): &(usize, usize, usize)| (std::cmp::Reverse(o), h, t);
        if scored.len() > self.k {
            scored.select_nth_unstable_by_key(self.k - 1, key);
            scored.truncate(self.k);
        }
        scored.sort_unstable_by_key(key);

        let relation_phrase = rephrase_relation(&triple.relation)?;
        let pairs = scored
            .into_iter()
            .map(|(overlap, h, t)| EvidencePair {
                head_sentence_id: Some(h),
                tail_sentence_id: Some(t),
                head_sentence: corpus.sentences[h].text.clone(),
                tail_sentence: corpus.sentences[t].text.clone(),
                overlap,
                relation_phrase: relation_phrase.clone(),
            })
            .collect();
        Ok(EvidenceSet {
            triple: triple.clone(),
            pairs,
            fallback_used: false,
        })
    }
}

/// [`EvidenceSelector::select`] with the default per-term limit.
pub fn select_evidence(triple: &LabeledTriple, corpus: &Corpus, k: usize, stopwords: &Stopwords) -> Result<EvidenceSet> {
    EvidenceSelector::new(k, stopwords.clone())?.select(triple, corpus)
}
