use std::io::Write;
use std::path::PathBuf;

use serde_json::json;

use super::{create, evidence_sets, load_corpus, read_triples, EVIDENCE_KEYS};
use crate::config::{key, with_default, CommandSpec, Key, RunConfig};
use crate::error::CliError;
use crate::run::RunDir;

pub const INGEST_CORPUS: CommandSpec = CommandSpec {
    name: "ingest-corpus",
    about: "Split raw text into sentences, one per line",
    keys: &[&[
        key("corpus", "raw UTF-8 text"),
        with_default("split", "punctuation", "split mode: punctuation | lines"),
    ]],
};

pub fn ingest_corpus(config: &RunConfig) -> Result<PathBuf, CliError> {
    let corpus = load_corpus(config)?;
    let mut run = RunDir::create(config)?;
    let mut w = create(&run.output("sentences.txt"))?;
    for s in corpus.sentences() {
        writeln!(w, "{}", s.text)?;
    }
    w.flush()?;
    run.finish(config, json!({ "sentences": corpus.len() }))
}

const SELECT_KEYS: [Key; 6] = [
    key("triples", "triple file"),
    with_default("k", "3", "evidence pairs per triple"),
    EVIDENCE_KEYS[0],
    EVIDENCE_KEYS[1],
    EVIDENCE_KEYS[3],
    EVIDENCE_KEYS[4],
];

pub const SELECT_EVIDENCE: CommandSpec = CommandSpec {
    name: "select-evidence",
    about: "Pick the top-K head/tail sentence pairs for each triple",
    keys: &[&SELECT_KEYS],
};

pub fn select_evidence(config: &RunConfig) -> Result<PathBuf, CliError> {
    let triples = read_triples(config.path("triples")?)?;
    let sets = evidence_sets(config, &triples, config.get("k")?)?;
    let mut run = RunDir::create(config)?;
    let mut w = create(&run.output("evidence.jsonl"))?;
    for set in &sets {
        for r in set.to_records() {
            writeln!(w, "{}", serde_json::to_string(&r)?)?;
        }
    }
    w.flush()?;
    let fallbacks = sets.iter().filter(|s| s.fallback_used).count();
    run.finish(
        config,
        json!({
            "triples": sets.len(),
            "pairs": sets.iter().map(|s| s.pairs.len()).sum::<usize>(),
            "fallbacks": fallbacks,
        }),
    )
}
