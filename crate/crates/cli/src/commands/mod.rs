//! Command table and the input helpers shared by several commands.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use deepck_core::lm::{BigramLm, WordVocab};
use deepck_core::retrieval::{evidence_from_records, Corpus, EvidenceRecord, EvidenceSelector, EvidenceSet, Stopwords};
use deepck_core::{parse_triple_file, render_template, Label, LabeledTriple, TripleKey};

use crate::config::{key, with_default, CommandSpec, Key, RunConfig};
use crate::error::CliError;

mod classify;
mod depth;
mod propagate;
mod retrieval;

pub type Handler = fn(&RunConfig) -> Result<PathBuf, CliError>;

const EVIDENCE_KEYS: [Key; 5] = [
    key("corpus", "sentence file (one per line unless `split` says otherwise)"),
    with_default("split", "lines", "corpus split mode: lines | punctuation"),
    key("evidence", "evidence JSONL from select-evidence, used instead of selecting anew"),
    key("stopwords", "stopword file, one word per line (default: built-in English list)"),
    with_default("per_term_limit", "1000", "most recent sentences kept per term"),
];

pub const COMMANDS: [(CommandSpec, Handler); 13] = [
    (depth::SCORE_DEPTH, depth::score_depth),
    (depth::ANALYZE_DEPTH, depth::analyze_depth),
    (depth::RELATION_PROFILE, depth::relation_profile),
    (retrieval::INGEST_CORPUS, retrieval::ingest_corpus),
    (retrieval::SELECT_EVIDENCE, retrieval::select_evidence),
    (classify::TRAIN, classify::train),
    (classify::PREDICT, classify::predict),
    (classify::EVALUATE, classify::evaluate),
    (classify::PERF_BY_DEPTH, classify::perf_by_depth),
    (propagate::PROPAGATE, propagate::propagate),
    (propagate::NEGATIVE_SAMPLE, propagate::negative_sample),
    (classify::SWEEP_K, classify::sweep_k),
    (classify::SWEEP_STRATEGY, classify::sweep_strategy),
];

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))
}

fn with_path<T>(path: &Path, r: deepck_core::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| match CliError::from(e) {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub(crate) fn read_triples(path: &Path) -> Result<Vec<LabeledTriple>, CliError> {
    let triples = with_path(path, parse_triple_file(open(path)?))?;
    if triples.is_empty() {
        return Err(CliError::Data(format!("{} holds no triples", path.display())));
    }
    Ok(triples)
}

pub(crate) fn gold_labels(triples: &[LabeledTriple], path: &Path) -> Result<Vec<Label>, CliError> {
    triples
        .iter()
        .map(|t| {
            t.label
                .ok_or_else(|| CliError::Data(format!("{}: {t} has no label", path.display())))
        })
        .collect()
}

pub(crate) fn gold_by_key(config: &RunConfig, key: &str) -> Result<HashMap<TripleKey, Label>, CliError> {
    let path = config.path(key)?;
    let triples = read_triples(path)?;
    let labels = gold_labels(&triples, path)?;
    Ok(triples.iter().map(LabeledTriple::key).zip(labels).collect())
}

fn stopwords(config: &RunConfig) -> Result<Stopwords, CliError> {
    match config.opt_path("stopwords") {
        Some(p) => with_path(p, Stopwords::load(open(p)?)),
        None => Ok(Stopwords::english()),
    }
}

pub(crate) fn load_corpus(config: &RunConfig) -> Result<Corpus, CliError> {
    let path = config.path("corpus")?;
    let mode = config.get("split")?;
    with_path(path, Corpus::ingest_reader(open(path)?, mode))
}

/// Evidence for each triple, from `evidence` records when given, else selected from `corpus`.
pub(crate) fn evidence_sets(config: &RunConfig, triples: &[LabeledTriple], k: usize) -> Result<Vec<EvidenceSet>, CliError> {
    let corpus = load_corpus(config)?;
    if let Some(path) = config.opt_path("evidence") {
        let mut records = Vec::new();
        for (i, line) in open(path)?.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(
                serde_json::from_str::<EvidenceRecord>(&line)
                    .map_err(|e| CliError::Data(format!("{}: line {}: {e}", path.display(), i + 1)))?,
            );
        }
        let sets = with_path(path, evidence_from_records(&records, &corpus))?;
        let by_key: HashMap<TripleKey, EvidenceSet> = sets.into_iter().map(|s| (s.triple.key(), s)).collect();
        return triples
            .iter()
            .map(|t| {
                by_key.get(&t.key()).cloned().map(|mut s| {
                    s.triple = t.clone();
                    s
                })
                .ok_or_else(|| CliError::Data(format!("{}: no evidence for {t}", path.display())))
            })
            .collect();
    }
    let selector = EvidenceSelector::new(k, stopwords(config)?)
        .map_err(CliError::config)?
        .with_per_term_limit(config.get("per_term_limit")?);
    Ok(triples
        .iter()
        .map(|t| selector.select(t, &corpus))
        .collect::<deepck_core::Result<_>>()?)
}

/// `lm_table` when given, else a uniform bigram over the words of `texts`.
pub(crate) fn scoring_backend<'a>(
    config: &RunConfig,
    texts: impl IntoIterator<Item = &'a str>,
) -> Result<BigramLm<f64>, CliError> {
    let lm = match config.opt_path("lm_table") {
        Some(p) => with_path(p, BigramLm::load_table(open(p)?))?.with_name(format!("bigram:{}", p.display())),
        None => BigramLm::uniform(WordVocab::from_texts(texts)).with_name("uniform-bigram"),
    };
    Ok(match config.get_opt::<usize>("context_window")? {
        Some(w) => lm.with_context_window(w),
        None => lm,
    })
}

pub(crate) fn template_texts(triples: &[LabeledTriple]) -> Vec<String> {
    triples.iter().map(|t| render_template(t).text).collect()
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub(crate) fn create(path: &Path) -> Result<std::io::BufWriter<File>, CliError> {
    File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}
