use std::collections::HashMap;
use std::io::BufRead;
use std::ops::Range;

use super::vocab::WordVocab;
use super::{BackendDescriptor, LanguageBackend, NextTokenDistribution, TokenId, TokenSequence, TrainableLm};
use crate::error::{Error, Result};
use crate::nn::{log_softmax, Gradients, Matrix};
use crate::scalar::Scalar;

/// Prev-token marker for the unconditional first-token row in table files.
pub const START_MARKER: &str = "*";

const DEFAULT_CONTEXT_WINDOW: usize = 1024;

/// Bigram language model over a [`WordVocab`].
///
/// Scores are a `(V + 1) × V` logit table: row `i < V` conditions on token
/// `i`, row `V` on sequence start. Rows never configured are all-zero and
/// therefore uniform.
#[derive(Debug, Clone)]
pub struct BigramLm<T> {
    vocab: WordVocab,
    descriptor: BackendDescriptor,
    logits: Matrix<T>,
}

impl<T: Scalar> BigramLm<T> {
    pub fn uniform(vocab: WordVocab) -> Self {
        let v = vocab.len();
        Self::from_logits(vocab, Matrix::zeros(v + 1, v))
    }

    /// `logits` must be `(V + 1) × V`.
    pub fn from_logits(vocab: WordVocab, logits: Matrix<T>) -> Self {
        let v = vocab.len();
        assert_eq!(logits.shape(), (v + 1, v), "bigram logit table shape");
        let descriptor = BackendDescriptor {
            name: "bigram".into(),
            vocab_size: v,
            context_window: DEFAULT_CONTEXT_WINDOW,
            supports_encoding: false,
            supports_training: true,
            special: vocab.special(),
        };
        BigramLm {
            vocab,
            descriptor,
            logits,
        }
    }

    /// Builds a model from `(prev, next, probability)` entries; `prev = None` is the start row.
    ///
    /// Each configured row is renormalized; unlisted successors get probability zero.
    pub fn from_table(vocab: WordVocab, entries: &[(Option<TokenId>, TokenId, f64)]) -> Result<Self> {
        let v = vocab.len();
        let mut rows: HashMap<usize, Vec<f64>> = HashMap::new();
        for &(prev, next, p) in entries {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
            }
            let r = prev.map_or(v, |id| id as usize);
            if r > v || next as usize >= v {
                return Err(Error::invalid("token id outside the vocabulary"));
            }
            rows.entry(r).or_insert_with(|| vec![0.0; v])[next as usize] += p;
        }
        let mut logits = Matrix::zeros(v + 1, v);
        for (r, probs) in rows {
            let total: f64 = probs.iter().sum();
            if total <= 0.0 {
                return Err(Error::invalid("table row with zero total probability"));
            }
            for (j, p) in probs.into_iter().enumerate() {
                logits[(r, j)] = T::of((p / total).ln());
            }
        }
        Ok(Self::from_logits(vocab, logits))
    }

    /// Reads `prev next probability` lines; the vocabulary is every token in
    /// order of first appearance (the start marker excluded).
    pub fn load_table<R: BufRead>(reader: R) -> Result<Self> {
        let mut raw = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let err = |message: String| Error::Parse { line: i + 1, message };
            if fields.len() != 3 {
                return Err(err(format!("expected `prev next probability`, got {} fields", fields.len())));
            }
            let p: f64 = fields[2]
                .parse()
                .map_err(|_| err(format!("bad probability {:?}", fields[2])))?;
            raw.push((fields[0].to_lowercase(), fields[1].to_lowercase(), p));
        }
        let vocab = WordVocab::new(
            raw.iter()
                .flat_map(|(a, b, _)| [a.as_str(), b.as_str()])
                .filter(|w| *w != START_MARKER),
        );
        let lookup = |w: &str| vocab.id(w).expect("table word is in its own vocabulary");
        let entries: Vec<_> = raw
            .iter()
            .map(|(a, b, p)| ((a != START_MARKER).then(|| lookup(a)), lookup(b), *p))
            .collect();
        Self::from_table(vocab, &entries)
    }

    pub fn with_context_window(mut self, window: usize) -> Self {
        self.descriptor.context_window = window;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.descriptor.name = name.into();
        self
    }

    pub fn vocab(&self) -> &WordVocab {
        &self.vocab
    }

    pub fn logits(&self) -> &Matrix<T> {
        &self.logits
    }

    fn row_for(&self, prefix: &[TokenId]) -> usize {
        prefix.last().map_or(self.vocab.len(), |&id| id as usize)
    }
}

impl<T: Scalar> LanguageBackend for BigramLm<T> {
    type Scalar = T;

    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn tokenize(&self, text: &str) -> TokenSequence {
        self.vocab.tokenize(text)
    }

    fn detokenize(&self, ids: &[TokenId]) -> String {
        self.vocab.detokenize(ids)
    }

    fn next_token_logprobs(&self, prefix: &[TokenId]) -> Result<NextTokenDistribution<T>> {
        self.descriptor.check_window(prefix.len())?;
        if prefix.iter().any(|&id| id as usize >= self.vocab.len()) {
            return Err(Error::invalid("prefix token outside the vocabulary"));
        }
        NextTokenDistribution::new(log_softmax(self.logits.row(self.row_for(prefix))))
    }
}

impl<T: Scalar> TrainableLm for BigramLm<T> {
    fn masked_nll(&self, seq: &[TokenId], targets: Range<usize>) -> Result<(T, Gradients<T>)> {
        if targets.end > seq.len() {
            return Err(Error::invalid("target range exceeds the sequence"));
        }
        self.descriptor.check_window(seq.len())?;
        let v = self.vocab.len();
        let mut grad = Matrix::zeros(v + 1, v);
        let mut loss = T::zero();
        for l in targets {
            let row = self.row_for(&seq[..l]);
            let lp = log_softmax(self.logits.row(row));
            let target = seq[l] as usize;
            loss -= lp[target];
            for (g, &x) in grad.row_mut(row).iter_mut().zip(&lp) {
                *g += x.exp();
            }
            grad[(row, target)] -= T::one();
        }
        let mut grads = Gradients::default();
        grads.add(0, &grad);
        Ok((loss, grads))
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix<T>> {
        vec![&mut self.logits]
    }
}
