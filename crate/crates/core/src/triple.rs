//! Knowledge triples, relation phrases and template rendering.

use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;

/// Binary validity label of a triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Fictitious = 0,
    Valid = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Fictitious),
            1 => Some(Label::Valid),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// A `(head, relation, tail)` record with an optional gold label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub label: Option<Label>,
}

/// Identity of a triple for set operations: lowercased, whitespace-normalized fields.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TripleKey {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl LabeledTriple {
    /// Builds a validated, unlabeled triple. Internal whitespace in terms is collapsed.
    pub fn new(head: &str, relation: &str, tail: &str) -> Result<Self> {
        let head = collapse_ws(head);
        let tail = collapse_ws(tail);
        let relation = relation.trim().to_string();
        if text::word_spans(&head).is_empty() {
            return Err(Error::invalid(format!("head term {head:?} has no tokens")));
        }
        if text::word_spans(&tail).is_empty() {
            return Err(Error::invalid(format!("tail term {tail:?} has no tokens")));
        }
        if relation.is_empty() || relation.chars().any(char::is_whitespace) {
            return Err(Error::invalid(format!(
                "relation {relation:?} must be a non-empty identifier without whitespace"
            )));
        }
        Ok(LabeledTriple {
            head,
            relation,
            tail,
            label: None,
        })
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }

    pub fn key(&self) -> TripleKey {
        TripleKey {
            head: collapse_ws(&self.head).to_lowercase(),
            relation: self.relation.trim().to_lowercase(),
            tail: collapse_ws(&self.tail).to_lowercase(),
        }
    }
}

impl fmt::Display for LabeledTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.relation, self.tail)
    }
}

/// Parses the tab-separated triple format; `#` lines and blank lines are skipped.
pub fn parse_triple_file<R: BufRead>(reader: R) -> Result<Vec<LabeledTriple>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(parse_triple_line(line, line_no)?);
    }
    Ok(out)
}

/// Convenience wrapper over [`parse_triple_file`] for in-memory text.
pub fn parse_triples(text: &str) -> Result<Vec<LabeledTriple>> {
    parse_triple_file(text.as_bytes())
}

fn parse_triple_line(line: &str, line_no: usize) -> Result<LabeledTriple> {
    let fields: Vec<&str> = line.split('\t').collect();
    let parse_err = |message: String| Error::Parse {
        line: line_no,
        message,
    };
    if fields.len() != 3 && fields.len() != 4 {
        return Err(parse_err(format!(
            "expected 3 or 4 tab-separated fields, found {}",
            fields.len()
        )));
    }
    let triple = LabeledTriple::new(fields[0], fields[1], fields[2])
        .map_err(|e| parse_err(e.to_string()))?;
    match fields.get(3).map(|s| s.trim()) {
        None => Ok(triple),
        Some("0") => Ok(triple.with_label(Label::Fictitious)),
        Some("1") => Ok(triple.with_label(Label::Valid)),
        Some(other) => Err(parse_err(format!("label {other:?} is not 0 or 1"))),
    }
}

/// Writes triples in the format read by [`parse_triple_file`].
pub fn write_triple_file<W: Write>(triples: &[LabeledTriple], mut w: W) -> std::io::Result<()> {
    for t in triples {
        match t.label {
            Some(l) => writeln!(w, "{}\t{}\t{}\t{}", t.head, t.relation, t.tail, l)?,
            None => writeln!(w, "{}\t{}\t{}", t.head, t.relation, t.tail)?,
        }
    }
    Ok(())
}

/// Natural-language rewording of a relation identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelationPhrase {
    pub relation: String,
    pub phrase: String,
}

impl RelationPhrase {
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.phrase.split(' ')
    }
}

/// Splits a camel-case identifier at lowercase→uppercase boundaries and lowercases it.
pub fn rephrase_relation(relation: &str) -> Result<RelationPhrase> {
    let relation = relation.trim();
    if relation.is_empty() {
        return Err(Error::invalid("empty relation identifier"));
    }
    Ok(RelationPhrase {
        relation: relation.to_string(),
        phrase: camel_to_phrase(relation),
    })
}

fn camel_to_phrase(relation: &str) -> String {
    let mut phrase = String::with_capacity(relation.len() + 4);
    let mut prev_lower = false;
    for c in relation.chars() {
        if c.is_uppercase() && prev_lower {
            phrase.push(' ');
        }
        prev_lower = c.is_lowercase();
        phrase.extend(c.to_lowercase());
    }
    phrase
}

/// A triple rendered as a plain sentence, with the term positions it contains.
///
/// Token spans index whitespace tokens of `text`; char spans are byte ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedSentence {
    pub text: String,
    pub head_tokens: Range<usize>,
    pub relation_tokens: Range<usize>,
    pub tail_tokens: Range<usize>,
    pub head_chars: Range<usize>,
    pub tail_chars: Range<usize>,
}

/// Renders `head relation-phrase tail`.
pub fn render_template(triple: &LabeledTriple) -> RenderedSentence {
    let head = collapse_ws(&triple.head);
    let tail = collapse_ws(&triple.tail);
    let phrase = camel_to_phrase(triple.relation.trim());

    let m = head.split(' ').count();
    let n = phrase.split(' ').count();
    let k = tail.split(' ').count();

    let text = format!("{head} {phrase} {tail}");
    let tail_start = head.len() + 1 + phrase.len() + 1;
    RenderedSentence {
        head_chars: 0..head.len(),
        tail_chars: tail_start..text.len(),
        text,
        head_tokens: 0..m,
        relation_tokens: m..m + n,
        tail_tokens: m + n..m + n + k,
    }
}
