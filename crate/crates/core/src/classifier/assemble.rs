use std::ops::Range;

use crate::error::{Error, Result};
use crate::lm::{LanguageBackend, TokenId};
use crate::retrieval::EvidencePair;
use crate::text::find_subsequence;
use crate::triple::{render_template, LabeledTriple};

/// `<cls> s^h <sep> R <sep> s^t` with the positions of the pooled tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssembledInput {
    pub ids: Vec<TokenId>,
    pub span_cls: Range<usize>,
    pub span_h: Range<usize>,
    pub span_r: Range<usize>,
    pub span_t: Range<usize>,
    /// Sentence tokens dropped to fit the encoder window.
    pub truncated: usize,
}

impl AssembledInput {
    /// Rows gathered into the pooled sequence: `<cls>`, head term, relation, tail term.
    pub fn pooled_rows(&self) -> Vec<usize> {
        self.span_cls
            .clone()
            .chain(self.span_h.clone())
            .chain(self.span_r.clone())
            .chain(self.span_t.clone())
            .collect()
    }
}

fn locate(sentence: &[TokenId], term: &[TokenId], what: &str) -> Result<Range<usize>> {
    find_subsequence(sentence, term)
        .map(|p| p..p + term.len())
        .ok_or_else(|| Error::Assembly(format!("{what} term does not occur in its evidence sentence")))
}

/// Kept window of a sentence that may shrink from either end but never into `span`.
struct Trim {
    keep: Range<usize>,
    span: Range<usize>,
    far_is_start: bool,
}

impl Trim {
    fn trim_one(&mut self) -> bool {
        let (far, near) = if self.far_is_start {
            (self.keep.start < self.span.start, self.keep.end > self.span.end)
        } else {
            (self.keep.end > self.span.end, self.keep.start < self.span.start)
        };
        let from_start = if far { self.far_is_start } else if near { !self.far_is_start } else { return false };
        if from_start {
            self.keep.start += 1;
        } else {
            self.keep.end -= 1;
        }
        true
    }
}

/// Builds the classifier input for one evidence pair of `triple`.
///
/// Overlong inputs lose sentence tokens one at a time, alternating between
/// the two sentences and starting from the end away from the relation
/// (the start of `s^h`, the end of `s^t`). Term tokens are never removed.
pub fn assemble_input<B: LanguageBackend + ?Sized>(
    pair: &EvidencePair,
    triple: &LabeledTriple,
    backend: &B,
) -> Result<AssembledInput> {
    let special = backend.descriptor().special;
    let window = backend.descriptor().context_window;
    let sh = backend.tokenize(&pair.head_sentence).ids;
    let st = backend.tokenize(&pair.tail_sentence).ids;
    let rel = backend.tokenize(&pair.relation_phrase.phrase).ids;
    let head_span = locate(&sh, &backend.tokenize(&triple.head).ids, "head")?;
    let tail_span = locate(&st, &backend.tokenize(&triple.tail).ids, "tail")?;

    let mut h = Trim {
        keep: 0..sh.len(),
        span: head_span.clone(),
        far_is_start: true,
    };
    let mut t = Trim {
        keep: 0..st.len(),
        span: tail_span.clone(),
        far_is_start: false,
    };
    let total = 3 + rel.len() + sh.len() + st.len();
    let mut excess = total.saturating_sub(window);
    let mut turn_h = true;
    while excess > 0 {
        let (first, second) = if turn_h { (&mut h, &mut t) } else { (&mut t, &mut h) };
        let trimmed = first.trim_one() || second.trim_one();
        if !trimmed {
            return Err(Error::Assembly(format!(
                "terms and relation need {} tokens; the window is {window}",
                3 + rel.len() + head_span.len() + tail_span.len()
            )));
        }
        excess -= 1;
        turn_h = !turn_h;
    }

    let mut ids = Vec::with_capacity(total);
    ids.push(special.cls);
    let h_off = 1 - h.keep.start as isize;
    ids.extend_from_slice(&sh[h.keep.clone()]);
    ids.push(special.sep);
    let r_start = ids.len();
    ids.extend_from_slice(&rel);
    let r_end = ids.len();
    ids.push(special.sep);
    let t_off = ids.len() as isize - t.keep.start as isize;
    ids.extend_from_slice(&st[t.keep.clone()]);

    let shift = |r: &Range<usize>, off: isize| (r.start as isize + off) as usize..(r.end as isize + off) as usize;
    Ok(AssembledInput {
        truncated: total - ids.len(),
        ids,
        span_cls: 0..1,
        span_h: shift(&head_span, h_off),
        span_r: r_start..r_end,
        span_t: shift(&tail_span, t_off),
    })
}

/// `<cls>` followed by the rendered triple, for the concatenation baseline.
pub fn assemble_triple<B: LanguageBackend + ?Sized>(triple: &LabeledTriple, backend: &B) -> Result<Vec<TokenId>> {
    let mut ids = vec![backend.descriptor().special.cls];
    ids.extend(backend.tokenize(&render_template(triple).text).ids);
    if ids.len() > backend.descriptor().context_window {
        return Err(Error::ContextOverflow {
            len: ids.len(),
            window: backend.descriptor().context_window,
        });
    }
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{BigramLm, WordVocab};
    use crate::triple::rephrase_relation;
    use proptest::prelude::*;

    fn backend(window: usize) -> BigramLm<f64> {
        let vocab = WordVocab::new("a b c d e f g h the whale lives in deep ocean at location x y z".split(' '));
        BigramLm::uniform(vocab).with_context_window(window)
    }

    fn pair(hs: &str, ts: &str, relation: &str) -> EvidencePair {
        EvidencePair {
            head_sentence_id: Some(0),
            tail_sentence_id: Some(1),
            head_sentence: hs.into(),
            tail_sentence: ts.into(),
            overlap: 0,
            relation_phrase: rephrase_relation(relation).unwrap(),
        }
    }

    #[test]
    fn length_arithmetic() {
        let b = backend(64);
        let t = LabeledTriple::new("a", "X", "h").unwrap();
        let input = assemble_input(&pair("a b c d e", "f g h y", "X"), &t, &b).unwrap();
        assert_eq!(input.ids.len(), 13);
        let s = b.descriptor().special;
        assert_eq!(input.ids[0], s.cls);
        assert_eq!((input.ids[6], input.ids[8]), (s.sep, s.sep));
        assert_eq!((input.span_h.clone(), input.span_r.clone(), input.span_t.clone()), (1..2, 7..8, 11..12));
    }

    #[test]
    fn identical_sentences_appear_twice() {
        let b = backend(64);
        let t = LabeledTriple::new("whale", "AtLocation", "deep ocean").unwrap();
        let s = "the whale lives in the deep ocean";
        let input = assemble_input(&pair(s, s, "AtLocation"), &t, &b).unwrap();
        assert_eq!(input.ids.len(), 1 + 7 + 1 + 2 + 1 + 7);
        assert_eq!(input.span_h, 2..3);
        assert_eq!(input.span_t, 17..19);
    }

    #[test]
    fn repeated_term_marks_first_occurrence() {
        let b = backend(64);
        let t = LabeledTriple::new("a", "X", "b").unwrap();
        let input = assemble_input(&pair("c a d a", "b", "X"), &t, &b).unwrap();
        assert_eq!(input.span_h, 2..3);
    }

    #[test]
    fn truncation_trims_far_ends_and_keeps_terms() {
        let b = backend(10);
        let t = LabeledTriple::new("d", "X", "f").unwrap();
        // 3 + 1 + 5 + 5 = 14 tokens, 4 over the window
        let input = assemble_input(&pair("a b c d e", "f g h x y", "X"), &t, &b).unwrap();
        assert_eq!(input.ids.len(), 10);
        assert_eq!(input.truncated, 4);
        assert_eq!(b.detokenize(&input.ids), "<cls> c d e <sep> x <sep> f g h");
        assert_eq!(b.detokenize(&input.ids[input.span_h.clone()]), "d");
        assert_eq!(b.detokenize(&input.ids[input.span_t.clone()]), "f");
    }

    #[test]
    fn impossible_truncation_is_an_assembly_error() {
        let b = backend(5);
        let t = LabeledTriple::new("a b", "X", "c d").unwrap();
        assert!(matches!(
            assemble_input(&pair("a b", "c d", "X"), &t, &b),
            Err(Error::Assembly(_))
        ));
    }

    #[test]
    fn missing_term_is_an_assembly_error() {
        let b = backend(64);
        let t = LabeledTriple::new("whale", "X", "a").unwrap();
        assert!(matches!(assemble_input(&pair("b c", "a", "X"), &t, &b), Err(Error::Assembly(_))));
    }

    proptest! {
        #[test]
        fn spans_are_ordered_and_hold_the_terms(
            pre_h in 0usize..6, post_h in 0usize..6, pre_t in 0usize..6, post_t in 0usize..6, window in 8usize..30,
        ) {
            let b = backend(window);
            let fill = |n: usize| vec!["x"; n].join(" ");
            let hs = format!("{} whale {}", fill(pre_h), fill(post_h));
            let ts = format!("{} deep ocean {}", fill(pre_t), fill(post_t));
            let t = LabeledTriple::new("whale", "AtLocation", "deep ocean").unwrap();
            match assemble_input(&pair(&hs, &ts, "AtLocation"), &t, &b) {
                Ok(input) => {
                    prop_assert!(input.ids.len() <= window);
                    prop_assert!(input.span_cls.end <= input.span_h.start);
                    prop_assert!(input.span_h.end < input.span_r.start);
                    prop_assert!(input.span_r.end < input.span_t.start);
                    prop_assert_eq!(b.detokenize(&input.ids[input.span_h.clone()]), "whale");
                    prop_assert_eq!(b.detokenize(&input.ids[input.span_t.clone()]), "deep ocean");
                    prop_assert_eq!(input.ids.len() + input.truncated, 3 + 2 + pre_h + post_h + 1 + pre_t + post_t + 2);
                }
                Err(e) => {
                    prop_assert!(matches!(e, Error::Assembly(_)));
                    prop_assert!(window < 3 + 2 + 1 + 2);
                }
            }
        }
    }
}
