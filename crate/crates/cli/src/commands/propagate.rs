use std::io::{BufRead, Write};
use std::path::PathBuf;

use deepck_core::lm::{BigramLm, WordVocab};
use deepck_core::propagation::{
    build_deep_candidates, generate_candidates, negative_sample as sample_negatives, propagate as propagate_tree,
    train_generator, write_annotation_sheet, write_candidates_tsv, GeneratorConfig, TaxonomyTree,
};
use deepck_core::{write_triple_file, LabeledTriple};
use serde_json::json;

use super::{create, open, read_triples, template_texts, with_path};
use crate::config::{key, with_default, CommandSpec, RunConfig};
use crate::error::CliError;
use crate::run::RunDir;

pub const PROPAGATE: CommandSpec = CommandSpec {
    name: "propagate",
    about: "Generate tails (S1), propagate them over a taxonomy (S2) and keep the deep new candidates",
    keys: &[&[
        key("triples", "seed triples the generator is fitted to"),
        key("taxonomy", "child<TAB>parent lines"),
        key("pairs", "head<TAB>relation lines to decode tails for (default: those of `triples`)"),
        key("lm_table", "bigram table used as the generator instead of a fitted uniform bigram"),
        key("context_window", "override the backend context window"),
        with_default("generator_steps", "200", "generator fitting steps; 0 skips fitting"),
        with_default("generator_lr", "0.1", "generator learning rate"),
        with_default("generator_batch", "32", "triples per generator step"),
        with_default("beam_width", "5", "beam width"),
        with_default("max_len", "4", "longest decoded tail, end marker included"),
        with_default("horizontal", "1", "horizontal propagation distance"),
        with_default("vertical", "1", "vertical propagation distance"),
        with_default("threshold", "2000", "depth rank a candidate must exceed"),
    ]],
};

fn read_pairs(config: &RunConfig, triples: &[LabeledTriple]) -> Result<Vec<(String, String)>, CliError> {
    let Some(path) = config.opt_path("pairs") else {
        let mut pairs: Vec<(String, String)> = triples.iter().map(|t| (t.head.clone(), t.relation.clone())).collect();
        pairs.sort();
        pairs.dedup();
        return Ok(pairs);
    };
    let mut pairs = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match line.split('\t').collect::<Vec<_>>()[..] {
            [h, r] if !h.trim().is_empty() && !r.trim().is_empty() => pairs.push((h.trim().into(), r.trim().into())),
            _ => {
                return Err(CliError::Data(format!(
                    "{}: line {}: expected `head<TAB>relation`",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(pairs)
}

pub fn propagate(config: &RunConfig) -> Result<PathBuf, CliError> {
    let triples = read_triples(config.path("triples")?)?;
    let tree_path = config.path("taxonomy")?;
    let tree = with_path(tree_path, TaxonomyTree::load(open(tree_path)?))?;
    let pairs = read_pairs(config, &triples)?;
    let beam_width: usize = config.get("beam_width")?;
    let max_len: usize = config.get("max_len")?;
    let horizontal: usize = config.get("horizontal")?;
    let vertical: usize = config.get("vertical")?;
    let threshold: f64 = config.get("threshold")?;
    if beam_width == 0 || max_len == 0 || horizontal == 0 || vertical == 0 {
        return Err(CliError::Config(
            "beam_width, max_len, horizontal and vertical must be at least 1".into(),
        ));
    }
    let gen = GeneratorConfig {
        steps: config.get("generator_steps")?,
        learning_rate: config.get("generator_lr")?,
        batch_size: config.get("generator_batch")?,
        seed: config.seed()?,
    };

    let mut lm = match config.opt_path("lm_table") {
        Some(p) => with_path(p, BigramLm::<f64>::load_table(open(p)?))?.with_name(format!("bigram:{}", p.display())),
        None => {
            let texts = template_texts(&triples);
            let words = texts.iter().map(String::as_str).chain(tree.terms());
            BigramLm::uniform(WordVocab::from_texts(words)).with_name("uniform-bigram")
        }
    };
    if let Some(w) = config.get_opt::<usize>("context_window")? {
        lm = lm.with_context_window(w);
    }
    let curve = if gen.steps > 0 { train_generator(&triples, &mut lm, &gen)? } else { Vec::new() };

    let s1 = generate_candidates(&pairs, &lm, beam_width, max_len)?;
    let s2 = propagate_tree(&tree, &s1, horizontal, vertical)?;
    let deep = build_deep_candidates(&s1, &s2, &lm, threshold);

    let mut run = RunDir::create(config)?;
    write_candidates_tsv(&s1, create(&run.output("s1.tsv"))?)?;
    write_candidates_tsv(&s2, create(&run.output("s2.tsv"))?)?;
    write_candidates_tsv(&deep.kept, create(&run.output("deep_candidates.tsv"))?)?;
    write_annotation_sheet(&deep.kept, create(&run.output("annotation_sheet.tsv"))?)?;
    let mut w = create(&run.output("dropped.tsv"))?;
    writeln!(w, "head\trelation\ttail\treason")?;
    for (c, reason) in &deep.dropped {
        let t = &c.triple;
        writeln!(w, "{}\t{}\t{}\t{}", t.head, t.relation, t.tail, reason.replace(['\t', '\n'], " "))?;
    }
    w.flush()?;
    run.finish(
        config,
        json!({
            "pairs": pairs.len(),
            "s1": s1.len(),
            "s2": s2.len(),
            "deep": deep.kept.len(),
            "dropped": deep.dropped.len(),
            "generator_final_loss": curve.last(),
        }),
    )
}

pub const NEGATIVE_SAMPLE: CommandSpec = CommandSpec {
    name: "negative-sample",
    about: "Corrupt one field of random positives to build labeled negatives",
    keys: &[&[
        key("triples", "positive triple file"),
        key("count", "negatives to draw"),
    ]],
};

pub fn negative_sample(config: &RunConfig) -> Result<PathBuf, CliError> {
    let positives = read_triples(config.path("triples")?)?;
    let count: usize = config.get("count")?;
    let negatives = sample_negatives(&positives, count, config.seed()?)?;
    let mut run = RunDir::create(config)?;
    let mut w = create(&run.output("negatives.tsv"))?;
    write_triple_file(&negatives, &mut w)?;
    w.flush()?;
    run.finish(config, json!({ "positives": positives.len(), "negatives": negatives.len() }))
}
