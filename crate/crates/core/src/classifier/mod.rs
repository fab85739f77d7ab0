//! Evidence-pair classifier: `<cls> s^h <sep> R <sep> s^t` inputs, a
//! transformer encoder, attention pooling over the term tokens, and the
//! ensemble rules that turn K per-pair distributions into one label.

mod assemble;
mod ensemble;
mod head;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use assemble::{assemble_input, assemble_triple, AssembledInput};
pub use ensemble::{
    check_distributions, evidence_loss, predict, predict_avg, predict_max, predict_vote, strategy_scores,
    write_predictions_csv, EvidenceLoss, PredictionBundle, Strategy, PROBABILITY_FLOOR,
};
pub use head::{ClassifierHead, LinearHead, PoolingHead};

use crate::error::{Error, Result};
use crate::lm::{BackendDescriptor, LanguageBackend, TokenId, WordVocab};
use crate::nn::{Adam, EncoderConfig, Gradients, Matrix, StoredMatrix, Tape, TransformerEncoder};
use crate::retrieval::EvidenceSet;
use crate::scalar::Scalar;
use crate::triple::{Label, LabeledTriple};
use head::softmax_pair;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub encoder_layers: usize,
    pub encoder_heads: usize,
    pub hidden_dim: usize,
    pub ffn_dim: usize,
    pub max_positions: usize,
    pub pool_heads: usize,
    pub k: usize,
    pub learning_rate: f64,
    pub train_steps: usize,
    pub batch_size: usize,
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            encoder_layers: 24,
            encoder_heads: 16,
            hidden_dim: 1024,
            ffn_dim: 4096,
            max_positions: 512,
            pool_heads: 8,
            k: 3,
            learning_rate: 1e-5,
            train_steps: 24_000,
            batch_size: 16,
            clip_norm: None,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("encoder_heads", self.encoder_heads),
            ("hidden_dim", self.hidden_dim),
            ("ffn_dim", self.ffn_dim),
            ("max_positions", self.max_positions),
            ("pool_heads", self.pool_heads),
            ("k", self.k),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be positive")));
        }
        if !self.hidden_dim.is_multiple_of(self.pool_heads) || !self.hidden_dim.is_multiple_of(self.encoder_heads) {
            return Err(Error::invalid("head counts must divide hidden_dim"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.clip_norm.is_some_and(|c| !(c.is_finite() && c > 0.0)) {
            return Err(Error::invalid("clip_norm must be positive"));
        }
        Ok(())
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            layers: self.encoder_layers,
            heads: self.encoder_heads,
            hidden: self.hidden_dim,
            ffn: self.ffn_dim,
            max_positions: self.max_positions,
        }
    }
}

/// What the model reads for each triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputMode {
    /// Up to K evidence pairs, pooled by [`PoolingHead`].
    Evidence,
    /// The rendered triple alone, classified from `<cls>` by [`LinearHead`].
    Triple,
}

/// Probabilities for one assembled input, reading token representations from `backend`.
pub fn forward<B: LanguageBackend>(
    input: &AssembledInput,
    backend: &B,
    head: &PoolingHead<B::Scalar>,
) -> Result<[B::Scalar; 2]> {
    let enc = backend.encode(&input.ids)?;
    check_width(&enc, head.params().get(head.layout().1).cols())?;
    let mut tape = Tape::new();
    let e = tape.constant(enc);
    let logits = head.forward(&mut tape, 0, e, &input.pooled_rows());
    Ok(softmax_pair(tape.value(logits)))
}

/// Concatenation baseline: `<cls>` plus the rendered triple through a linear-softmax layer.
pub fn baseline_triple_classify<B: LanguageBackend>(
    triple: &LabeledTriple,
    backend: &B,
    head: &LinearHead<B::Scalar>,
) -> Result<[B::Scalar; 2]> {
    let ids = assemble_triple(triple, backend)?;
    let enc = backend.encode(&ids)?;
    check_width(&enc, head.params().get(0).cols())?;
    let mut tape = Tape::new();
    let e = tape.constant(enc);
    let logits = head.forward(&mut tape, 0, e);
    Ok(softmax_pair(tape.value(logits)))
}

fn check_width<T: Scalar>(enc: &Matrix<T>, dim: usize) -> Result<()> {
    if enc.cols() != dim {
        return Err(Error::invalid(format!(
            "encoder width {} does not match head width {dim}",
            enc.cols()
        )));
    }
    Ok(())
}

/// Vocabulary over every sentence, term and relation phrase in `sets`.
pub fn training_vocab(sets: &[EvidenceSet]) -> WordVocab {
    let mut texts: Vec<&str> = Vec::new();
    for s in sets {
        texts.extend([s.triple.head.as_str(), s.triple.tail.as_str()]);
        for p in &s.pairs {
            texts.extend([p.head_sentence.as_str(), p.relation_phrase.phrase.as_str(), p.tail_sentence.as_str()]);
        }
    }
    WordVocab::from_texts(texts)
}

#[derive(Debug, Clone)]
struct ModelInput {
    ids: Vec<TokenId>,
    rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport<T> {
    /// Mean minibatch loss after each optimizer step.
    pub loss_curve: Vec<T>,
    /// Steps where some gold probability hit the floor.
    pub clamped_steps: usize,
}

#[derive(Debug, Clone)]
pub struct ContextClassifier<T> {
    config: ClassifierConfig,
    mode: InputMode,
    encoder: TransformerEncoder<T>,
    head: ClassifierHead<T>,
}

impl<T: Scalar> ContextClassifier<T> {
    /// Randomly initialized model; initialization depends only on `config.seed`.
    pub fn new(config: ClassifierConfig, mode: InputMode, vocab: WordVocab) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let encoder = TransformerEncoder::new(config.encoder(), vocab, &mut rng)?;
        let head = match mode {
            InputMode::Evidence => ClassifierHead::Pooling(PoolingHead::new(config.hidden_dim, config.pool_heads, &mut rng)?),
            InputMode::Triple => ClassifierHead::Linear(LinearHead::new(config.hidden_dim, &mut rng)?),
        };
        Ok(ContextClassifier {
            config,
            mode,
            encoder,
            head,
        })
    }

    /// Assembles a model from existing parts; the head kind must match `mode`.
    pub fn from_parts(
        config: ClassifierConfig,
        encoder: TransformerEncoder<T>,
        head: ClassifierHead<T>,
    ) -> Result<Self> {
        config.validate()?;
        let mode = match head {
            ClassifierHead::Pooling(_) => InputMode::Evidence,
            ClassifierHead::Linear(_) => InputMode::Triple,
        };
        Ok(ContextClassifier {
            config,
            mode,
            encoder,
            head,
        })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn mode(&self) -> InputMode {
        self.mode
    }

    pub fn encoder(&self) -> &TransformerEncoder<T> {
        &self.encoder
    }

    pub fn head(&self) -> &ClassifierHead<T> {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut ClassifierHead<T> {
        &mut self.head
    }

    /// Changes K used at inference; training and the manifest also use it.
    pub fn set_k(&mut self, k: usize) -> Result<()> {
        if k < 1 {
            return Err(Error::invalid("K must be at least 1"));
        }
        self.config.k = k;
        Ok(())
    }

    fn inputs(&self, set: &EvidenceSet) -> Result<Vec<ModelInput>> {
        match self.mode {
            InputMode::Evidence => {
                if set.pairs.is_empty() {
                    return Err(Error::invalid(format!("no evidence pairs for {}", set.triple)));
                }
                set.pairs
                    .iter()
                    .take(self.config.k)
                    .map(|p| {
                        let a = assemble_input(p, &set.triple, &self.encoder)?;
                        Ok(ModelInput {
                            rows: a.pooled_rows(),
                            ids: a.ids,
                        })
                    })
                    .collect()
            }
            InputMode::Triple => Ok(vec![ModelInput {
                ids: assemble_triple(&set.triple, &self.encoder)?,
                rows: vec![0],
            }]),
        }
    }

    fn run<'a>(&'a self, tape: &mut Tape<'a, T>, input: &ModelInput) -> Result<crate::nn::NodeId> {
        let enc = self.encoder.forward(tape, &input.ids, 0)?;
        Ok(self.head.forward(tape, self.encoder.params().len(), enc, &input.rows))
    }

    /// Per-pair `(p_0, p_1)` for the first K pairs of `set` (one entry in triple mode).
    pub fn probabilities(&self, set: &EvidenceSet) -> Result<Vec<[T; 2]>> {
        self.inputs(set)?
            .iter()
            .map(|input| {
                let mut tape = Tape::new();
                let logits = self.run(&mut tape, input)?;
                Ok(softmax_pair(tape.value(logits)))
            })
            .collect()
    }

    pub fn predict(&self, set: &EvidenceSet, strategy: Strategy) -> Result<PredictionBundle<T>> {
        PredictionBundle::new(self.probabilities(set)?, strategy)
    }

    fn gradients(&self, inputs: &[ModelInput], gold: Label) -> Result<(Vec<[T; 2]>, Gradients<T>)> {
        let inv_k = T::one() / T::of_usize(inputs.len());
        let mut probs = Vec::with_capacity(inputs.len());
        let mut grads = Gradients::default();
        for input in inputs {
            let mut tape = Tape::new();
            let logits = self.run(&mut tape, input)?;
            let p = softmax_pair(tape.value(logits));
            let mut seed = Matrix::from_vec(1, 2, vec![p[0] * inv_k, p[1] * inv_k]);
            seed[(0, gold.index())] -= inv_k;
            grads.accumulate(&tape.backward(logits, seed));
            probs.push(p);
        }
        Ok((probs, grads))
    }

    /// Evidence loss of one labeled set and its gradient in parameter-slot
    /// order (encoder parameters first, then the head's).
    pub fn loss_and_gradients(&self, set: &EvidenceSet, gold: Label) -> Result<(EvidenceLoss<T>, Gradients<T>)> {
        let (probs, grads) = self.gradients(&self.inputs(set)?, gold)?;
        Ok((evidence_loss(&probs, gold)?, grads))
    }

    /// Runs `config.train_steps` Adam steps on minibatches drawn from a
    /// seeded reshuffle of `data`.
    pub fn train(&mut self, data: &[(EvidenceSet, Label)]) -> Result<TrainReport<T>> {
        if data.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        let inputs: Vec<Vec<ModelInput>> = data.iter().map(|(s, _)| self.inputs(s)).collect::<Result<_>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(1);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut cursor = order.len();
        let batch = self.config.batch_size.min(data.len());
        let mut adam = Adam::new(T::of(self.config.learning_rate)).with_clip_norm(self.config.clip_norm.map(T::of));
        let mut report = TrainReport {
            loss_curve: Vec::with_capacity(self.config.train_steps),
            clamped_steps: 0,
        };

        for step in 0..self.config.train_steps {
            let mut grads = Gradients::default();
            let mut loss = T::zero();
            let mut clamped = false;
            for _ in 0..batch {
                if cursor == order.len() {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                let i = order[cursor];
                cursor += 1;
                let (probs, g) = self.gradients(&inputs[i], data[i].1)?;
                if probs.iter().flatten().any(|p| !p.is_finite()) {
                    return Err(Error::NonFiniteLoss { step });
                }
                let l = evidence_loss(&probs, data[i].1)?;
                clamped |= l.clamped;
                loss += l.value;
                grads.accumulate(&g);
            }
            let inv = T::one() / T::of_usize(batch);
            loss *= inv;
            grads.scale(inv);
            if !loss.is_finite() || !grads.norm().is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            adam.step(
                self.encoder.params_mut().values_mut().chain(self.head.params_mut().values_mut()),
                &grads,
            );
            report.loss_curve.push(loss);
            report.clamped_steps += usize::from(clamped);
        }
        Ok(report)
    }

    /// Writes `manifest.json` and `weights.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let manifest = Manifest {
            format: CHECKPOINT_FORMAT,
            mode: self.mode,
            config: self.config,
            backend: self.encoder.descriptor().clone(),
            seed: self.config.seed,
            scalar: std::any::type_name::<T>().to_string(),
            vocab: self.encoder.vocab().plain_words().to_vec(),
        };
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        let mut weights = BTreeMap::new();
        self.encoder.save_params(&mut weights);
        self.head.params().to_stored("head.", &mut weights);
        fs::write(dir.join("weights.json"), serde_json::to_string(&weights)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
        if manifest.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unsupported format {}", manifest.format)));
        }
        let weights: BTreeMap<String, StoredMatrix> =
            serde_json::from_str(&fs::read_to_string(dir.join("weights.json"))?)?;
        let mut model = Self::new(manifest.config, manifest.mode, WordVocab::new(&manifest.vocab))?;
        if model.encoder.descriptor() != &manifest.backend {
            return Err(Error::Checkpoint("backend descriptor does not match the rebuilt encoder".into()));
        }
        model.encoder.load_params(&weights)?;
        model.head.params_mut().load_stored("head.", &weights)?;
        Ok(model)
    }
}

const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: u32,
    mode: InputMode,
    config: ClassifierConfig,
    backend: BackendDescriptor,
    seed: u64,
    scalar: String,
    vocab: Vec<String>,
}

#[cfg(test)]
mod tests;
