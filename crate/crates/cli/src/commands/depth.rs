use std::path::PathBuf;

use deepck_core::depth::{
    bin_statistics, depth_distribution, is_deep, pearson, range_labels, read_annotations, read_scores_csv,
    relation_depth_profile, score_triple, write_scores_csv, Metric, DEFAULT_DEEP_THRESHOLD,
};
use deepck_core::Error;
use serde_json::json;

use super::{create, csv_writer, open, read_triples, scoring_backend, template_texts, with_path};
use crate::config::{key, with_default, CommandSpec, RunConfig};
use crate::error::CliError;
use crate::plot;
use crate::run::RunDir;

pub const SCORE_DEPTH: CommandSpec = CommandSpec {
    name: "score-depth",
    about: "Score depth rank and perplexity of triples under a scoring backend",
    keys: &[&[
        key("triples", "triple file: head<TAB>relation<TAB>tail[<TAB>label]"),
        key("lm_table", "bigram table (`prev next prob` lines, `*` = start); default: uniform"),
        key("context_window", "override the backend context window"),
        with_default("threshold", "2000", "depth rank above which a triple counts as deep"),
    ]],
};

pub fn score_depth(config: &RunConfig) -> Result<PathBuf, CliError> {
    let triples = read_triples(config.path("triples")?)?;
    let threshold: f64 = config.get("threshold")?;
    let texts = template_texts(&triples);
    let backend = scoring_backend(config, texts.iter().map(String::as_str))?;
    let scores = triples
        .iter()
        .map(|t| score_triple(t, &backend))
        .collect::<deepck_core::Result<Vec<_>>>()?;
    let mut run = RunDir::create(config)?;
    write_scores_csv(&scores, create(&run.output("scores.csv"))?)?;
    let deep = scores.iter().filter(|s| is_deep(s, threshold)).count();
    let degenerate = scores.iter().filter(|s| s.is_degenerate()).count();
    run.finish(
        config,
        json!({
            "backend": backend_name(&scores),
            "triples": scores.len(),
            "deep": deep,
            "degenerate_perplexity": degenerate,
            "default_threshold": DEFAULT_DEEP_THRESHOLD,
        }),
    )
}

fn backend_name(scores: &[deepck_core::DepthScore64]) -> String {
    scores.first().map(|s| s.backend_name.clone()).unwrap_or_default()
}

pub const ANALYZE_DEPTH: CommandSpec = CommandSpec {
    name: "analyze-depth",
    about: "Bin scores, correlate them with annotated depth and tabulate the depth distribution",
    keys: &[&[
        key("scores", "scores.csv from score-depth"),
        key("annotations", "head<TAB>relation<TAB>tail<TAB>depth lines, depth in [1, 4]"),
        with_default("metric", "depth_rank", "binning metric: depth_rank | perplexity"),
        with_default("bins", "10", "number of equal-frequency bins"),
        with_default("edges", "1000,2000,3000", "depth-rank range edges"),
    ]],
};

pub fn analyze_depth(config: &RunConfig) -> Result<PathBuf, CliError> {
    let path = config.path("scores")?;
    let scores = with_path(path, read_scores_csv::<f64, _>(open(path)?))?;
    if scores.is_empty() {
        return Err(CliError::Data(format!("{} holds no scores", path.display())));
    }
    let metric: Metric = config.get("metric")?;
    let bins: usize = config.get("bins")?;
    if bins == 0 {
        return Err(CliError::Config("`bins` must be at least 1".into()));
    }
    let edges: Vec<f64> = config.list("edges")?;
    let annotations = match config.opt_path("annotations") {
        Some(p) => Some(with_path(p, read_annotations::<f64, _>(open(p)?))?),
        None => None,
    };
    let mut run = RunDir::create(config)?;

    let stats = bin_statistics(&scores, annotations.as_ref(), metric, bins.min(scores.len()))?;
    let mut w = csv_writer(&run.output("bins.csv"))?;
    w.write_record(["bin_index", "low", "high", "member_count", "mean_metric", "mean_annotated_depth"])?;
    for b in &stats {
        w.write_record([
            b.bin_index.to_string(),
            b.low.to_string(),
            b.high.to_string(),
            b.member_count.to_string(),
            b.mean_metric.to_string(),
            b.mean_annotated_depth.map_or(String::new(), |d| d.to_string()),
        ])?;
    }
    w.flush()?;
    let curve: Vec<(f64, f64)> = stats
        .iter()
        .filter_map(|b| b.mean_annotated_depth.map(|d| (b.bin_index as f64, d)))
        .collect();
    if curve.is_empty() {
        let means = stats.iter().map(|b| (b.bin_index as f64, b.mean_metric)).collect();
        plot::line_chart(&run.output("bins.svg"), "Mean metric per bin", "bin", metric.name(), &[(metric.name().into(), means)])?;
    } else {
        plot::line_chart(&run.output("bins.svg"), "Annotated depth per bin", "bin", "mean annotated depth", &[(metric.name().into(), curve)])?;
    }

    let shares = depth_distribution(&scores, &edges).map_err(CliError::config)?;
    let labels = range_labels(&edges);
    let mut w = csv_writer(&run.output("distribution.csv"))?;
    w.write_record(["range", "proportion"])?;
    for (l, s) in labels.iter().zip(&shares) {
        w.write_record([l.clone(), s.to_string()])?;
    }
    w.flush()?;
    let bars: Vec<(String, f64)> = labels.into_iter().zip(shares).collect();
    plot::bar_chart(&run.output("distribution.svg"), "Depth rank distribution", "proportion", &bars)?;

    let mut summary = json!({ "scores": scores.len(), "bins": stats.len() });
    if let Some(ann) = &annotations {
        let mut w = csv_writer(&run.output("correlation.csv"))?;
        w.write_record(["metric", "pairs", "pearson", "defined"])?;
        for m in [Metric::DepthRank, Metric::Perplexity] {
            let (x, y): (Vec<f64>, Vec<f64>) = scores
                .iter()
                .filter_map(|s| ann.get(&s.triple.key()).map(|&d| (m.of(s), d)))
                .filter(|(x, _)| x.is_finite())
                .unzip();
            let (r, defined) = match pearson(&x, &y) {
                Ok(r) => (r.to_string(), true),
                Err(Error::UndefinedCorrelation(_)) => (String::new(), false),
                Err(e) => return Err(e.into()),
            };
            summary[format!("pearson_{}", m.name())] = if defined { json!(r.parse::<f64>().ok()) } else { json!(null) };
            w.write_record([m.name().to_string(), x.len().to_string(), r, defined.to_string()])?;
        }
        w.flush()?;
    }
    run.finish(config, summary)
}

pub const RELATION_PROFILE: CommandSpec = CommandSpec {
    name: "relation-profile",
    about: "Mean and spread of depth rank per relation",
    keys: &[&[key("scores", "scores.csv from score-depth")]],
};

pub fn relation_profile(config: &RunConfig) -> Result<PathBuf, CliError> {
    let path = config.path("scores")?;
    let scores = with_path(path, read_scores_csv::<f64, _>(open(path)?))?;
    let profile = relation_depth_profile(&scores);
    let mut run = RunDir::create(config)?;
    let mut w = csv_writer(&run.output("relation_profile.csv"))?;
    w.write_record(["relation", "mean_depth_rank", "stddev_depth_rank", "count"])?;
    for p in &profile {
        w.write_record([
            p.relation.clone(),
            p.mean_depth_rank.to_string(),
            p.stddev_depth_rank.to_string(),
            p.count.to_string(),
        ])?;
    }
    w.flush()?;
    let bars: Vec<(String, f64)> = profile.iter().map(|p| (p.relation.clone(), p.mean_depth_rank)).collect();
    plot::bar_chart(&run.output("relation_profile.svg"), "Mean depth rank per relation", "depth rank", &bars)?;
    run.finish(config, json!({ "relations": profile.len(), "scores": scores.len() }))
}
