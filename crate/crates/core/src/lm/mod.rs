//! Language-model backends: tokenization, next-token scoring and encoding.
//!
//! Every backend implements [`LanguageBackend`]. Scoring-only backends leave
//! [`LanguageBackend::encode`] at its default, which reports a capability
//! error; encoders do the same for [`LanguageBackend::next_token_logprobs`].

mod bigram;
mod vocab;

use std::ops::Range;

use serde::{Deserialize, Serialize};

pub use bigram::BigramLm;
pub use vocab::WordVocab;

use crate::error::{Error, Result};
use crate::nn::{Gradients, Matrix};
use crate::scalar::Scalar;

pub type TokenId = u32;

/// Token ids with the byte span each token covers in the source text.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence {
    pub ids: Vec<TokenId>,
    pub offsets: Vec<Range<usize>>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Indices of tokens lying entirely inside the byte range `chars`.
    pub fn tokens_within(&self, chars: &Range<usize>) -> Range<usize> {
        let start = self
            .offsets
            .iter()
            .position(|o| o.start >= chars.start)
            .unwrap_or(self.offsets.len());
        let end = self.offsets[start..]
            .iter()
            .position(|o| o.end > chars.end)
            .map_or(self.offsets.len(), |p| start + p);
        start..end
    }
}

/// Log-probabilities of every vocabulary entry as the next token.
#[derive(Debug, Clone, PartialEq)]
pub struct NextTokenDistribution<T> {
    logprobs: Vec<T>,
}

impl<T: Scalar> NextTokenDistribution<T> {
    /// Wraps `logprobs`, rejecting vectors whose probabilities do not sum to one.
    pub fn new(logprobs: Vec<T>) -> Result<Self> {
        let total: f64 = logprobs.iter().map(|l| l.as_f64().exp()).sum();
        if logprobs.is_empty() || (total - 1.0).abs() > 1e-6 || logprobs.iter().any(|l| l.is_nan()) {
            return Err(Error::invalid(format!(
                "next-token distribution sums to {total}, not 1"
            )));
        }
        Ok(NextTokenDistribution { logprobs })
    }

    pub fn logprobs(&self) -> &[T] {
        &self.logprobs
    }

    pub fn logprob(&self, id: TokenId) -> T {
        self.logprobs[id as usize]
    }

    pub fn len(&self) -> usize {
        self.logprobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logprobs.is_empty()
    }

    /// 1-based rank of `id`; tokens with equal probability are ordered by ascending id.
    pub fn rank_of(&self, id: TokenId) -> usize {
        let target = self.logprobs[id as usize];
        let ahead = self
            .logprobs
            .iter()
            .enumerate()
            .filter(|&(j, &lp)| lp > target || (lp == target && j < id as usize))
            .count();
        ahead + 1
    }

    /// Token ids ordered by descending probability, ties by ascending id.
    pub fn ranked_ids(&self) -> Vec<TokenId> {
        let mut ids: Vec<TokenId> = (0..self.logprobs.len() as TokenId).collect();
        ids.sort_by(|&a, &b| {
            self.logprobs[b as usize]
                .partial_cmp(&self.logprobs[a as usize])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        ids
    }
}

/// Reserved token ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokens {
    pub unknown: TokenId,
    pub sequence_start: TokenId,
    pub cls: TokenId,
    pub sep: TokenId,
    pub end_of_term: TokenId,
}

impl SpecialTokens {
    pub fn all(&self) -> [TokenId; 5] {
        [self.unknown, self.sequence_start, self.cls, self.sep, self.end_of_term]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    pub vocab_size: usize,
    pub context_window: usize,
    pub supports_encoding: bool,
    pub supports_training: bool,
    pub special: SpecialTokens,
}

impl BackendDescriptor {
    fn capability(&self, capability: &'static str) -> Error {
        Error::Capability {
            backend: self.name.clone(),
            capability,
        }
    }

    pub(crate) fn check_window(&self, len: usize) -> Result<()> {
        if len > self.context_window {
            return Err(Error::ContextOverflow {
                len,
                window: self.context_window,
            });
        }
        Ok(())
    }
}

pub trait LanguageBackend {
    type Scalar: Scalar;

    fn descriptor(&self) -> &BackendDescriptor;

    fn tokenize(&self, text: &str) -> TokenSequence;

    fn detokenize(&self, ids: &[TokenId]) -> String;

    /// Distribution of the token following `prefix`; an empty prefix conditions on sequence start.
    fn next_token_logprobs(&self, prefix: &[TokenId]) -> Result<NextTokenDistribution<Self::Scalar>> {
        let _ = prefix;
        Err(self.descriptor().capability("next-token scoring"))
    }

    /// One representation row per input token.
    fn encode(&self, ids: &[TokenId]) -> Result<Matrix<Self::Scalar>> {
        let _ = ids;
        Err(self.descriptor().capability("encoding"))
    }
}

/// A scoring backend whose parameters can be fitted by gradient descent.
pub trait TrainableLm: LanguageBackend {
    /// `Σ −log P(x_l | x_<l)` over the positions in `targets`, and its gradient.
    fn masked_nll(
        &self,
        seq: &[TokenId],
        targets: Range<usize>,
    ) -> Result<(Self::Scalar, Gradients<Self::Scalar>)>;

    /// Parameters in gradient-slot order.
    fn parameters_mut(&mut self) -> Vec<&mut Matrix<Self::Scalar>>;
}

impl<B: LanguageBackend + ?Sized> LanguageBackend for &B {
    type Scalar = B::Scalar;

    fn descriptor(&self) -> &BackendDescriptor {
        (**self).descriptor()
    }

    fn tokenize(&self, text: &str) -> TokenSequence {
        (**self).tokenize(text)
    }

    fn detokenize(&self, ids: &[TokenId]) -> String {
        (**self).detokenize(ids)
    }

    fn next_token_logprobs(&self, prefix: &[TokenId]) -> Result<NextTokenDistribution<Self::Scalar>> {
        (**self).next_token_logprobs(prefix)
    }

    fn encode(&self, ids: &[TokenId]) -> Result<Matrix<Self::Scalar>> {
        (**self).encode(ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_break_ties_by_id() {
        let lp = vec![(0.25f64).ln(); 4];
        let d = NextTokenDistribution::new(lp).unwrap();
        assert_eq!(d.rank_of(0), 1);
        assert_eq!(d.rank_of(3), 4);
        assert_eq!(d.ranked_ids(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn rejects_unnormalized() {
        assert!(NextTokenDistribution::new(vec![0.0f64, 0.0]).is_err());
    }

    #[test]
    fn tokens_within_char_range() {
        let seq = TokenSequence {
            ids: vec![0, 1, 2, 3],
            offsets: vec![0..5, 6..8, 9..17, 18..23],
        };
        assert_eq!(seq.tokens_within(&(18..23)), 3..4);
        assert_eq!(seq.tokens_within(&(6..17)), 1..3);
    }
}
