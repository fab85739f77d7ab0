//! Synthetic evidence-backed triples with a planted lexical signal.
//!
//! Every triple gets its own sentences, each naming the head, the tail, a
//! cue word and a few fillers:
//!
//! ```text
//! <filler> <head> <filler> <cue> <tail> <filler>
//! ```
//!
//! Valid triples draw their cue from [`POSITIVE_CUES`], fictitious ones
//! from [`NEGATIVE_CUES`]. With probability `noise` a sentence gets a cue
//! from the opposite list instead, so one sentence can mislead while a
//! majority of several rarely does. Heads, tails and fillers are made-up
//! words built from disjoint syllable sets, and no two triples share both
//! head and tail. Labels alternate so the split is balanced.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::retrieval::{Corpus, EvidenceSelector, EvidenceSet, Stopwords};
use crate::triple::{Label, LabeledTriple};

pub const POSITIVE_CUES: [&str; 4] = ["indeed", "surely", "truly", "certainly"];
pub const NEGATIVE_CUES: [&str; 4] = ["never", "hardly", "seldom", "barely"];
pub const RELATIONS: [&str; 4] = ["AtLocation", "CapableOf", "HasProperty", "UsedFor"];

const HEAD_SYLLABLES: [&str; 8] = ["ba", "ke", "lo", "mi", "nu", "ra", "so", "ti"];
const TAIL_SYLLABLES: [&str; 8] = ["dag", "fem", "gol", "hup", "jin", "pav", "wex", "zor"];
const FILLER_SYLLABLES: [&str; 6] = ["cru", "pli", "sna", "tro", "gwe", "bly"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub triples: usize,
    pub sentences_per_triple: usize,
    pub fillers_per_sentence: usize,
    /// Distinct head and tail words to draw from (each at most 512).
    pub pool_size: usize,
    /// Chance that one sentence carries the opposite cue.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            triples: 2000,
            sentences_per_triple: 3,
            fillers_per_sentence: 3,
            pool_size: 400,
            noise: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSuite {
    /// One sentence per entry, grouped by triple in triple order.
    pub sentences: Vec<String>,
    /// Labeled triples; even positions are valid, odd ones fictitious.
    pub triples: Vec<LabeledTriple>,
}

fn words(syllables: &[&str], parts: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    for _ in 0..parts {
        out = out
            .iter()
            .flat_map(|prefix| syllables.iter().map(move |s| format!("{prefix}{s}")))
            .collect();
    }
    out
}

pub fn generate(config: &SyntheticConfig) -> Result<SyntheticSuite> {
    let heads = words(&HEAD_SYLLABLES, 3);
    let tails = words(&TAIL_SYLLABLES, 3);
    let fillers = words(&FILLER_SYLLABLES, 2);
    if config.pool_size == 0 || config.pool_size > heads.len().min(tails.len()) {
        return Err(Error::invalid(format!("pool size must be in 1..={}", heads.len().min(tails.len()))));
    }
    if config.sentences_per_triple == 0 {
        return Err(Error::invalid("each triple needs at least one sentence"));
    }
    if !(0.0..=1.0).contains(&config.noise) {
        return Err(Error::invalid(format!("noise {} is outside [0, 1]", config.noise)));
    }
    let combos = config.pool_size * config.pool_size;
    if config.triples > combos / 2 {
        return Err(Error::invalid(format!("{} triples do not fit in a pool of {}", config.triples, config.pool_size)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let heads = &heads[..config.pool_size];
    let tails = &tails[..config.pool_size];
    let mut seen = HashSet::new();
    let mut suite = SyntheticSuite {
        sentences: Vec::with_capacity(config.triples * config.sentences_per_triple),
        triples: Vec::with_capacity(config.triples),
    };
    while suite.triples.len() < config.triples {
        let h = heads.choose(&mut rng).expect("non-empty pool");
        let r = RELATIONS.choose(&mut rng).expect("non-empty");
        let t = tails.choose(&mut rng).expect("non-empty pool");
        if !seen.insert((h, t)) {
            continue;
        }
        let label = if suite.triples.len().is_multiple_of(2) { Label::Valid } else { Label::Fictitious };
        for _ in 0..config.sentences_per_triple {
            let honest = !rng.random_bool(config.noise);
            let cues = if (label == Label::Valid) == honest { &POSITIVE_CUES } else { &NEGATIVE_CUES };
            let mut slots: Vec<&str> = (0..config.fillers_per_sentence)
                .map(|_| fillers.choose(&mut rng).expect("non-empty").as_str())
                .collect();
            let cue = cues.choose(&mut rng).expect("non-empty");
            let at = |i: usize, len: usize| i.min(len);
            slots.insert(at(1, slots.len()), h);
            slots.insert(at(3, slots.len()), cue);
            slots.insert(at(4, slots.len()), t);
            suite.sentences.push(slots.join(" "));
        }
        suite.triples.push(LabeledTriple::new(h, r, t)?.with_label(label));
    }
    Ok(suite)
}

impl SyntheticSuite {
    pub fn corpus(&self) -> Corpus {
        Corpus::from_sentences(self.sentences.iter().cloned())
    }

    /// Top-`k` evidence for every triple, paired with its gold label.
    pub fn evidence(&self, k: usize) -> Result<Vec<(EvidenceSet, Label)>> {
        let corpus = self.corpus();
        let selector = EvidenceSelector::new(k, Stopwords::english())?;
        self.triples
            .iter()
            .map(|t| Ok((selector.select(t, &corpus)?, t.label.expect("generated triples are labeled"))))
            .collect()
    }
}
