use std::collections::HashMap;
use std::path::{Path, PathBuf};

use deepck_core::classifier::{
    training_vocab, write_predictions_csv, ClassifierConfig, ContextClassifier, InputMode, Strategy,
};
use deepck_core::depth::read_scores_csv;
use deepck_core::eval::{
    evaluate as eval_report, evaluate_strategies, performance_by_depth, sweep_k as run_sweep, write_range_reports_csv,
    write_report_csv, write_sweep_csv, SweepCell, SweepMode,
};
use deepck_core::retrieval::EvidenceSet;
use deepck_core::{Label, LabeledTriple, Scalar, TripleKey};
use serde_json::{json, Value};

use super::{create, csv_writer, evidence_sets, gold_by_key, gold_labels, open, read_triples, with_path, EVIDENCE_KEYS};
use crate::config::{key, with_default, CommandSpec, Key, RunConfig};
use crate::error::CliError;
use crate::plot;
use crate::run::RunDir;

const MODEL_KEYS: [Key; 13] = [
    with_default("mode", "evidence", "input mode: evidence | triple"),
    with_default("scalar", "f32", "floating-point type: f32 | f64"),
    with_default("layers", "2", "encoder layers"),
    with_default("heads", "4", "encoder attention heads"),
    with_default("hidden_dim", "64", "model width"),
    with_default("ffn_dim", "128", "feed-forward width"),
    with_default("max_positions", "128", "longest assembled input"),
    with_default("pool_heads", "4", "pooling attention heads"),
    with_default("k", "3", "evidence pairs per triple"),
    with_default("learning_rate", "0.001", "Adam learning rate"),
    with_default("steps", "400", "optimizer steps"),
    with_default("batch_size", "16", "triples per step"),
    with_default("clip_norm", "1.0", "global gradient-norm clip; empty disables"),
];

fn input_mode(config: &RunConfig) -> Result<InputMode, CliError> {
    match config.str("mode")? {
        "evidence" => Ok(InputMode::Evidence),
        "triple" => Ok(InputMode::Triple),
        other => Err(CliError::Config(format!("unknown mode {other:?}"))),
    }
}

fn classifier_config(config: &RunConfig) -> Result<ClassifierConfig, CliError> {
    let c = ClassifierConfig {
        encoder_layers: config.get("layers")?,
        encoder_heads: config.get("heads")?,
        hidden_dim: config.get("hidden_dim")?,
        ffn_dim: config.get("ffn_dim")?,
        max_positions: config.get("max_positions")?,
        pool_heads: config.get("pool_heads")?,
        k: config.get("k")?,
        learning_rate: config.get("learning_rate")?,
        train_steps: config.get("steps")?,
        batch_size: config.get("batch_size")?,
        clip_norm: config.get_opt("clip_norm")?,
        seed: config.seed()?,
    };
    c.validate().map_err(CliError::config)?;
    Ok(c)
}

/// Evidence in evidence mode; triple mode needs no corpus and gets template stand-ins.
fn inputs(config: &RunConfig, triples: &[LabeledTriple], mode: InputMode, k: usize) -> Result<Vec<EvidenceSet>, CliError> {
    if mode == InputMode::Triple && config.opt("corpus").is_none() {
        return Ok(triples
            .iter()
            .map(EvidenceSet::fallback)
            .collect::<deepck_core::Result<_>>()?);
    }
    evidence_sets(config, triples, k)
}

fn labeled_sets(config: &RunConfig, key: &str, mode: InputMode, k: usize) -> Result<Vec<(EvidenceSet, Label)>, CliError> {
    let path = config.path(key)?;
    let triples = read_triples(path)?;
    let labels = gold_labels(&triples, path)?;
    Ok(inputs(config, &triples, mode, k)?.into_iter().zip(labels).collect())
}

fn checkpoint_scalar(dir: &Path) -> Result<String, CliError> {
    let text = std::fs::read_to_string(dir.join("manifest.json"))
        .map_err(|e| CliError::Data(format!("model {}: {e}", dir.display())))?;
    let v: Value = serde_json::from_str(&text)?;
    v["scalar"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| CliError::Data(format!("model {}: manifest lacks `scalar`", dir.display())))
}

fn load_model<T: Scalar>(dir: &Path) -> Result<ContextClassifier<T>, CliError> {
    Ok(ContextClassifier::load(dir)?)
}

/// Runs `$body` with `$t` bound to the scalar type named by `$name`.
macro_rules! with_scalar {
    ($name:expr, $t:ident => $body:expr) => {
        match $name {
            "f32" => {
                type $t = f32;
                $body
            }
            "f64" => {
                type $t = f64;
                $body
            }
            other => Err(CliError::Config(format!("unsupported scalar {other:?}"))),
        }
    };
}

fn accuracy<T: Scalar>(model: &ContextClassifier<T>, data: &[(EvidenceSet, Label)]) -> Result<f64, CliError> {
    let mut right = 0;
    for (s, l) in data {
        right += usize::from(model.predict(s, Strategy::Avg)?.label == *l);
    }
    Ok(right as f64 / data.len() as f64)
}

fn fit<T: Scalar>(
    config: ClassifierConfig,
    mode: InputMode,
    train: &[(EvidenceSet, Label)],
) -> Result<(ContextClassifier<T>, Vec<T>), CliError> {
    let vocab = training_vocab(&train.iter().map(|(s, _)| s.clone()).collect::<Vec<_>>());
    let mut model = ContextClassifier::new(config, mode, vocab).map_err(CliError::config)?;
    let report = model.train(train)?;
    Ok((model, report.loss_curve))
}

pub const TRAIN: CommandSpec = CommandSpec {
    name: "train",
    about: "Train the evidence classifier (or the triple-only baseline)",
    keys: &[&[key("triples", "labeled triple file")], &MODEL_KEYS, &EVIDENCE_KEYS],
};

pub fn train(config: &RunConfig) -> Result<PathBuf, CliError> {
    let c = classifier_config(config)?;
    let mode = input_mode(config)?;
    let data = labeled_sets(config, "triples", mode, c.k)?;
    with_scalar!(config.str("scalar")?, T => train_as::<T>(config, c, mode, &data))
}

fn train_as<T: Scalar>(
    config: &RunConfig,
    c: ClassifierConfig,
    mode: InputMode,
    data: &[(EvidenceSet, Label)],
) -> Result<PathBuf, CliError> {
    let (model, curve) = fit::<T>(c, mode, data)?;
    let mut run = RunDir::create(config)?;
    let model_dir = run.path().join("model");
    model.save(&model_dir)?;
    run.output("model/manifest.json");
    run.output("model/weights.json");
    let mut w = csv_writer(&run.output("loss_curve.csv"))?;
    w.write_record(["step", "loss"])?;
    for (i, l) in curve.iter().enumerate() {
        w.write_record([(i + 1).to_string(), l.as_f64().to_string()])?;
    }
    w.flush()?;
    let pts = curve.iter().enumerate().map(|(i, l)| ((i + 1) as f64, l.as_f64())).collect();
    plot::line_chart(&run.output("loss_curve.svg"), "Training loss", "step", "loss", &[("loss".into(), pts)])?;
    let train_accuracy = accuracy(&model, data)?;
    run.finish(
        config,
        json!({
            "examples": data.len(),
            "steps": curve.len(),
            "final_loss": curve.last().map(|l| l.as_f64()),
            "train_accuracy": train_accuracy,
        }),
    )
}

pub const PREDICT: CommandSpec = CommandSpec {
    name: "predict",
    about: "Classify triples with a trained model",
    keys: &[
        &[
            key("model", "model directory written by train"),
            key("triples", "triple file"),
            with_default("strategy", "avg", "ensemble rule: avg | max | vote"),
            key("k", "evidence pairs per triple (default: the model's)"),
        ],
        &EVIDENCE_KEYS,
    ],
};

pub fn predict(config: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = config.path("model")?;
    with_scalar!(checkpoint_scalar(dir)?.as_str(), T => predict_as::<T>(config, dir))
}

fn predict_as<T: Scalar>(config: &RunConfig, dir: &Path) -> Result<PathBuf, CliError> {
    let mut model = load_model::<T>(dir)?;
    if let Some(k) = config.get_opt("k")? {
        model.set_k(k).map_err(CliError::config)?;
    }
    let strategy: Strategy = config.get("strategy")?;
    let triples = read_triples(config.path("triples")?)?;
    let sets = inputs(config, &triples, model.mode(), model.config().k)?;
    let rows = sets
        .iter()
        .map(|s| Ok((s.triple.clone(), model.predict(s, strategy)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut run = RunDir::create(config)?;
    write_predictions_csv(&rows, create(&run.output("predictions.csv"))?)?;
    let positive = rows.iter().filter(|(_, b)| b.label == Label::Valid).count();
    run.finish(config, json!({ "triples": rows.len(), "predicted_valid": positive }))
}

fn read_predictions(path: &Path) -> Result<Vec<(TripleKey, Label)>, CliError> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("{}: no `{name}` column", path.display())))
    };
    let (h, rel, t, l) = (col("head")?, col("relation")?, col("tail")?, col("label")?);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = || CliError::Data(format!("{}: row {}", path.display(), i + 2));
        let triple = LabeledTriple::new(&rec[h], &rec[rel], &rec[t]).map_err(|_| bad())?;
        let label = rec[l].parse().ok().and_then(Label::from_index).ok_or_else(bad)?;
        out.push((triple.key(), label));
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("{} holds no predictions", path.display())));
    }
    Ok(out)
}

/// Prediction keys with predicted and gold labels, in prediction order.
type Aligned = (Vec<TripleKey>, Vec<Label>, Vec<Label>);

fn aligned(config: &RunConfig) -> Result<Aligned, CliError> {
    let preds = read_predictions(config.path("predictions")?)?;
    let gold = gold_by_key(config, "gold")?;
    let mut keys = Vec::with_capacity(preds.len());
    let (mut p, mut g) = (Vec::new(), Vec::new());
    for (k, label) in preds {
        let gl = *gold
            .get(&k)
            .ok_or_else(|| CliError::Data(format!("no gold label for {} {} {}", k.head, k.relation, k.tail)))?;
        keys.push(k);
        p.push(label);
        g.push(gl);
    }
    Ok((keys, p, g))
}

pub const EVALUATE: CommandSpec = CommandSpec {
    name: "evaluate",
    about: "Precision, recall and F1 of predictions against gold labels",
    keys: &[&[
        key("predictions", "predictions.csv from predict"),
        key("gold", "labeled triple file"),
    ]],
};

pub fn evaluate(config: &RunConfig) -> Result<PathBuf, CliError> {
    let (_, pred, gold) = aligned(config)?;
    let report = eval_report(&pred, &gold)?;
    let mut run = RunDir::create(config)?;
    write_report_csv(&report, create(&run.output("report.csv"))?)?;
    run.finish(config, serde_json::to_value(report)?)
}

pub const PERF_BY_DEPTH: CommandSpec = CommandSpec {
    name: "perf-by-depth",
    about: "Evaluate predictions separately per depth-rank range",
    keys: &[&[
        key("predictions", "predictions.csv from predict"),
        key("gold", "labeled triple file"),
        key("scores", "scores.csv from score-depth"),
        with_default("edges", "1000,2000,3000", "depth-rank range edges"),
    ]],
};

pub fn perf_by_depth(config: &RunConfig) -> Result<PathBuf, CliError> {
    let (keys, pred, gold) = aligned(config)?;
    let path = config.path("scores")?;
    let scores: HashMap<TripleKey, f64> = with_path(path, read_scores_csv::<f64, _>(open(path)?))?
        .into_iter()
        .map(|s| (s.triple.key(), s.depth_rank))
        .collect();
    let depths = keys
        .iter()
        .map(|k| {
            scores
                .get(k)
                .copied()
                .ok_or_else(|| CliError::Data(format!("no depth score for {} {} {}", k.head, k.relation, k.tail)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let edges: Vec<f64> = config.list("edges")?;
    let reports = performance_by_depth(&pred, &gold, &depths, &edges).map_err(|e| match e {
        deepck_core::Error::InvalidArgument(m) => CliError::Config(m),
        other => other.into(),
    })?;
    let mut run = RunDir::create(config)?;
    write_range_reports_csv(&reports, create(&run.output("perf_by_depth.csv"))?)?;
    let f1: Vec<(f64, f64)> = reports
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.report.empty)
        .map(|(i, r)| (i as f64, r.report.f1))
        .collect();
    plot::line_chart(&run.output("perf_by_depth.svg"), "F1 per depth range", "range index", "F1", &[("F1".into(), f1)])?;
    run.finish(
        config,
        json!({
            "ranges": reports.iter().map(|r| json!({ "range": r.range, "examples": r.report.total(), "f1": r.report.f1 })).collect::<Vec<_>>(),
        }),
    )
}

fn sweep_chart(run: &mut RunDir, cells: &[SweepCell]) -> Result<(), CliError> {
    let series: Vec<(String, Vec<(f64, f64)>)> = Strategy::ALL
        .iter()
        .map(|&s| {
            let pts = cells.iter().filter(|c| c.strategy == s).map(|c| (c.k as f64, c.report.f1)).collect();
            (s.to_string(), pts)
        })
        .collect();
    plot::line_chart(&run.output("sweep_k.svg"), "F1 against K", "K", "F1", &series)
}

fn cells_json(cells: &[SweepCell]) -> Value {
    cells
        .iter()
        .map(|c| json!({ "k": c.k, "strategy": c.strategy.to_string(), "f1": c.report.f1, "accuracy": c.report.accuracy }))
        .collect()
}

pub const SWEEP_K: CommandSpec = CommandSpec {
    name: "sweep-k",
    about: "Evaluate every ensemble rule for several evidence counts K",
    keys: &[
        &[
            key("train", "labeled training triples"),
            key("test", "labeled evaluation triples"),
            with_default("k_values", "1,3,5", "comma-separated K values"),
            with_default("sweep_mode", "reinfer", "reinfer (one model, first K pairs) | retrain (one model per K)"),
            key("model", "trained model to re-infer with instead of training one"),
        ],
        &MODEL_KEYS,
        &EVIDENCE_KEYS,
    ],
};

pub fn sweep_k(config: &RunConfig) -> Result<PathBuf, CliError> {
    let ks: Vec<usize> = config.list("k_values")?;
    let kmax = *ks.iter().max().ok_or_else(|| CliError::Config("`k_values` is empty".into()))?;
    if ks.contains(&0) {
        return Err(CliError::Config("K values must be at least 1".into()));
    }
    let mode: SweepMode = config.get("sweep_mode")?;
    if let Some(dir) = config.opt_path("model") {
        if mode == SweepMode::Retrain {
            return Err(CliError::Config("`model` only applies to sweep_mode = reinfer".into()));
        }
        return with_scalar!(checkpoint_scalar(dir)?.as_str(), T => {
            let model = load_model::<T>(dir)?;
            let train = labeled_sets(config, "train", model.mode(), kmax)?;
            let test = labeled_sets(config, "test", model.mode(), kmax)?;
            sweep_as(config, model, &train, &test, &ks, mode)
        });
    }
    let c = ClassifierConfig { k: kmax, ..classifier_config(config)? };
    let input = input_mode(config)?;
    let train = labeled_sets(config, "train", input, kmax)?;
    let test = labeled_sets(config, "test", input, kmax)?;
    with_scalar!(config.str("scalar")?, T => {
        let model = match mode {
            SweepMode::Reinfer => fit::<T>(c, input, &train)?.0,
            SweepMode::Retrain => {
                let vocab = training_vocab(&train.iter().map(|(s, _)| s.clone()).collect::<Vec<_>>());
                ContextClassifier::<T>::new(c, input, vocab).map_err(CliError::config)?
            }
        };
        sweep_as(config, model, &train, &test, &ks, mode)
    })
}

fn sweep_as<T: Scalar>(
    config: &RunConfig,
    model: ContextClassifier<T>,
    train: &[(EvidenceSet, Label)],
    test: &[(EvidenceSet, Label)],
    ks: &[usize],
    mode: SweepMode,
) -> Result<PathBuf, CliError> {
    let cells = run_sweep(&model, train, test, ks, mode)?;
    let mut run = RunDir::create(config)?;
    write_sweep_csv(&cells, create(&run.output("sweep_k.csv"))?)?;
    sweep_chart(&mut run, &cells)?;
    run.finish(config, json!({ "mode": mode.to_string(), "cells": cells_json(&cells) }))
}

pub const SWEEP_STRATEGY: CommandSpec = CommandSpec {
    name: "sweep-strategy",
    about: "Compare the avg, max and vote ensemble rules on one model",
    keys: &[
        &[
            key("model", "model directory written by train"),
            key("triples", "labeled evaluation triples"),
        ],
        &EVIDENCE_KEYS,
    ],
};

pub fn sweep_strategy(config: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = config.path("model")?;
    with_scalar!(checkpoint_scalar(dir)?.as_str(), T => {
        let model = load_model::<T>(dir)?;
        let k = model.config().k;
        let data = labeled_sets(config, "triples", model.mode(), k)?;
        let cells: Vec<SweepCell> = evaluate_strategies(&model, &data, &Strategy::ALL)?
            .into_iter()
            .map(|(strategy, report)| SweepCell { k, strategy, report })
            .collect();
        let mut run = RunDir::create(config)?;
        write_sweep_csv(&cells, create(&run.output("strategies.csv"))?)?;
        let bars: Vec<(String, f64)> = cells.iter().map(|c| (c.strategy.to_string(), c.report.f1)).collect();
        plot::bar_chart(&run.output("strategies.svg"), "F1 per ensemble rule", "F1", &bars)?;
        run.finish(config, json!({ "cells": cells_json(&cells) }))
    })
}
