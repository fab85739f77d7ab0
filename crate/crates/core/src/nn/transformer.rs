use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::attention::MultiHeadAttention;
use super::matrix::{Matrix, StoredMatrix};
use super::params::{glorot, normal, ParamSet};
use super::tape::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::lm::{BackendDescriptor, LanguageBackend, TokenId, TokenSequence, WordVocab};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub ffn: usize,
    pub max_positions: usize,
}

#[derive(Debug, Clone)]
struct Block {
    attention: MultiHeadAttention,
    norm1: (usize, usize),
    up: (usize, usize),
    down: (usize, usize),
    norm2: (usize, usize),
}

/// Bidirectional post-norm transformer encoder over a [`WordVocab`].
///
/// `E_0` is the layer-normalized sum of token and position embeddings; each
/// block applies self-attention and a GELU feed-forward, each followed by a
/// residual connection and layer normalization.
#[derive(Debug, Clone)]
pub struct TransformerEncoder<T> {
    config: EncoderConfig,
    vocab: WordVocab,
    descriptor: BackendDescriptor,
    params: ParamSet<T>,
    tokens: usize,
    positions: Option<usize>,
    embed_norm: Option<(usize, usize)>,
    blocks: Vec<Block>,
}

impl<T: Scalar> TransformerEncoder<T> {
    pub fn new<R: Rng>(config: EncoderConfig, vocab: WordVocab, rng: &mut R) -> Result<Self> {
        if config.hidden == 0 || config.heads == 0 || !config.hidden.is_multiple_of(config.heads) {
            return Err(Error::invalid("encoder head count must divide a positive hidden size"));
        }
        if config.ffn == 0 || config.max_positions == 0 {
            return Err(Error::invalid("encoder dimensions must be positive"));
        }
        let d = config.hidden;
        let mut params = ParamSet::new();
        let tokens = params.push("embeddings.token", normal(rng, vocab.len(), d, 0.1));
        let positions = Some(params.push("embeddings.position", normal(rng, config.max_positions, d, 0.1)));
        let embed_norm = Some(layer_norm(&mut params, "embeddings.norm", d));
        let mut blocks = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let prefix = format!("layer{l}");
            let attention = MultiHeadAttention::new(&mut params, &format!("{prefix}.attention"), d, config.heads, rng);
            let norm1 = layer_norm(&mut params, &format!("{prefix}.norm1"), d);
            let up = (
                params.push(format!("{prefix}.ffn.up.weight"), glorot(rng, d, config.ffn)),
                params.push(format!("{prefix}.ffn.up.bias"), Matrix::zeros(1, config.ffn)),
            );
            let down = (
                params.push(format!("{prefix}.ffn.down.weight"), glorot(rng, config.ffn, d)),
                params.push(format!("{prefix}.ffn.down.bias"), Matrix::zeros(1, d)),
            );
            let norm2 = layer_norm(&mut params, &format!("{prefix}.norm2"), d);
            blocks.push(Block {
                attention,
                norm1,
                up,
                down,
                norm2,
            });
        }
        Ok(TransformerEncoder {
            descriptor: descriptor("transformer-encoder", &vocab, config.max_positions),
            config,
            vocab,
            params,
            tokens,
            positions,
            embed_norm,
            blocks,
        })
    }

    /// Encoder that only looks up rows of `table`: no positions, normalization or blocks.
    pub fn embedding_only(vocab: WordVocab, table: Matrix<T>, max_positions: usize) -> Self {
        assert_eq!(table.rows(), vocab.len(), "one embedding row per vocabulary entry");
        let mut params = ParamSet::new();
        let hidden = table.cols();
        let tokens = params.push("embeddings.token", table);
        TransformerEncoder {
            descriptor: descriptor("embedding-lookup", &vocab, max_positions),
            config: EncoderConfig {
                layers: 0,
                heads: 1,
                hidden,
                ffn: hidden,
                max_positions,
            },
            vocab,
            params,
            tokens,
            positions: None,
            embed_norm: None,
            blocks: Vec::new(),
        }
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn vocab(&self) -> &WordVocab {
        &self.vocab
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn save_params(&self, out: &mut BTreeMap<String, StoredMatrix>) {
        self.params.to_stored("encoder.", out);
    }

    pub fn load_params(&mut self, stored: &BTreeMap<String, StoredMatrix>) -> Result<()> {
        self.params.load_stored("encoder.", stored)
    }

    /// Records the encoder on `tape`; returns the `L × hidden` output node.
    pub fn forward<'a>(&'a self, tape: &mut Tape<'a, T>, ids: &[TokenId], slot_offset: usize) -> Result<NodeId> {
        self.descriptor.check_window(ids.len())?;
        if ids.iter().any(|&id| id as usize >= self.vocab.len()) {
            return Err(Error::invalid("token id outside the encoder vocabulary"));
        }
        let p = &self.params;
        let slot = |i: usize| slot_offset + i;
        let idx: Vec<usize> = ids.iter().map(|&id| id as usize).collect();
        let mut x = tape.embed(p.get(self.tokens), slot(self.tokens), &idx);
        if let Some(pos) = self.positions {
            let positions: Vec<usize> = (0..ids.len()).collect();
            let pe = tape.embed(p.get(pos), slot(pos), &positions);
            x = tape.add(x, pe);
        }
        if let Some(norm) = self.embed_norm {
            x = apply_norm(tape, p, slot_offset, x, norm);
        }
        for block in &self.blocks {
            let attended = block.attention.forward(tape, p, slot_offset, x);
            let residual = tape.add(x, attended);
            let h = apply_norm(tape, p, slot_offset, residual, block.norm1);

            let w_up = tape.param(p.get(block.up.0), slot(block.up.0));
            let b_up = tape.param(p.get(block.up.1), slot(block.up.1));
            let w_down = tape.param(p.get(block.down.0), slot(block.down.0));
            let b_down = tape.param(p.get(block.down.1), slot(block.down.1));
            let u = tape.matmul(h, w_up);
            let u = tape.add_row(u, b_up);
            let u = tape.gelu(u);
            let f = tape.matmul(u, w_down);
            let f = tape.add_row(f, b_down);
            let residual = tape.add(h, f);
            x = apply_norm(tape, p, slot_offset, residual, block.norm2);
        }
        Ok(x)
    }
}

fn descriptor(name: &str, vocab: &WordVocab, window: usize) -> BackendDescriptor {
    BackendDescriptor {
        name: name.into(),
        vocab_size: vocab.len(),
        context_window: window,
        supports_encoding: true,
        supports_training: true,
        special: vocab.special(),
    }
}

fn layer_norm<T: Scalar>(params: &mut ParamSet<T>, prefix: &str, d: usize) -> (usize, usize) {
    (
        params.push(format!("{prefix}.gain"), Matrix::filled(1, d, T::one())),
        params.push(format!("{prefix}.bias"), Matrix::zeros(1, d)),
    )
}

fn apply_norm<'a, T: Scalar>(
    tape: &mut Tape<'a, T>,
    p: &'a ParamSet<T>,
    slot_offset: usize,
    x: NodeId,
    (gain, bias): (usize, usize),
) -> NodeId {
    let g = tape.param(p.get(gain), slot_offset + gain);
    let b = tape.param(p.get(bias), slot_offset + bias);
    tape.layer_norm(x, g, b)
}

impl<T: Scalar> LanguageBackend for TransformerEncoder<T> {
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

    fn encode(&self, ids: &[TokenId]) -> Result<Matrix<T>> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, ids, 0)?;
        Ok(tape.value(out).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> TransformerEncoder<f64> {
        let vocab = WordVocab::new(["apple", "is", "red", "whale"]);
        let config = EncoderConfig {
            layers: 2,
            heads: 2,
            hidden: 8,
            ffn: 16,
            max_positions: 16,
        };
        TransformerEncoder::new(config, vocab, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn encode_shape_and_determinism() {
        let enc = small();
        let ids = enc.tokenize("apple is red").ids;
        let a = enc.encode(&ids).unwrap();
        assert_eq!(a.shape(), (3, 8));
        assert_eq!(a, enc.encode(&ids).unwrap());
    }

    #[test]
    fn embedding_lookup_rows() {
        let vocab = WordVocab::new(["apple", "is"]);
        let n = vocab.len();
        let table = Matrix::from_vec(n, 3, (0..n * 3).map(|x| x as f64).collect());
        let enc = TransformerEncoder::embedding_only(vocab, table.clone(), 8);
        let out = enc.encode(&[0, 1]).unwrap();
        assert_eq!(out.row(0), table.row(0));
        assert_eq!(out.row(1), table.row(1));
    }

    #[test]
    fn window_overflow_is_an_error() {
        let enc = small();
        assert!(matches!(enc.encode(&[0; 17]), Err(Error::ContextOverflow { .. })));
    }

    #[test]
    fn scoring_is_a_capability_error() {
        let enc = small();
        assert!(matches!(enc.next_token_logprobs(&[0]), Err(Error::Capability { .. })));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let enc = small();
        let ids = [0u32, 2, 1, 3];
        let weights: Vec<f64> = (0..32).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
        let objective = |e: &TransformerEncoder<f64>| {
            let out = e.encode(&ids).unwrap();
            out.as_slice().iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut tape = Tape::new();
        let out = enc.forward(&mut tape, &ids, 0).unwrap();
        let grads = tape.backward(out, Matrix::from_vec(4, 8, weights.clone()));
        let h = 1e-5;
        for slot in 0..enc.params().len() {
            let n = enc.params().get(slot).as_slice().len();
            for e in (0..n).step_by(7) {
                let mut plus = enc.clone();
                plus.params_mut().get_mut(slot).as_mut_slice()[e] += h;
                let mut minus = enc.clone();
                minus.params_mut().get_mut(slot).as_mut_slice()[e] -= h;
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                let an = grads.get(slot).map_or(0.0, |g| g.as_slice()[e]);
                assert!((fd - an).abs() <= 1e-5 * (1.0 + fd.abs()), "slot {slot} entry {e}: {an} vs {fd}");
            }
        }
    }
}
