//! Binary evaluation, depth-binned evaluation and the K / strategy sweeps.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::{ContextClassifier, Strategy};
use crate::depth::{check_edges, range_index, range_labels};
use crate::error::{Error, Result};
use crate::retrieval::EvidenceSet;
use crate::scalar::Scalar;
use crate::triple::Label;

/// Precision, recall and F1 for the positive class `1`.
///
/// A ratio with a zero denominator is reported as 0 and flagged.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
    /// Set when the report covers no examples (only produced by range splits).
    pub empty: bool,
}

impl EvalReport {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { (0.0, true) } else { (num as f64 / den as f64, false) };
        let (precision, precision_undefined) = ratio(tp, tp + fp);
        let (recall, recall_undefined) = ratio(tp, tp + fn_);
        let (f1, f1_undefined) = if precision + recall > 0.0 {
            (2.0 * precision * recall / (precision + recall), false)
        } else {
            (0.0, true)
        };
        let n = tp + fp + tn + fn_;
        EvalReport {
            precision,
            recall,
            f1,
            accuracy: if n == 0 { 0.0 } else { (tp + tn) as f64 / n as f64 },
            tp,
            fp,
            tn,
            fn_,
            precision_undefined,
            recall_undefined,
            f1_undefined,
            empty: n == 0,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn confusion(predictions: &[Label], gold: &[Label]) -> EvalReport {
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (p, g) in predictions.iter().zip(gold) {
        match (p, g) {
            (Label::Valid, Label::Valid) => tp += 1,
            (Label::Valid, Label::Fictitious) => fp += 1,
            (Label::Fictitious, Label::Fictitious) => tn += 1,
            (Label::Fictitious, Label::Valid) => fn_ += 1,
        }
    }
    EvalReport::from_counts(tp, fp, tn, fn_)
}

pub fn evaluate(predictions: &[Label], gold: &[Label]) -> Result<EvalReport> {
    if predictions.len() != gold.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} gold labels",
            predictions.len(),
            gold.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::invalid("nothing to evaluate"));
    }
    Ok(confusion(predictions, gold))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeReport {
    pub range: String,
    pub report: EvalReport,
}

/// Splits examples by the range their depth falls in (see [`range_index`])
/// and evaluates each part. Ranges with no examples come back flagged empty.
pub fn performance_by_depth<T: Scalar>(
    predictions: &[Label],
    gold: &[Label],
    depths: &[T],
    edges: &[T],
) -> Result<Vec<RangeReport>> {
    evaluate(predictions, gold)?;
    if depths.len() != gold.len() {
        return Err(Error::invalid(format!("{} depth values for {} examples", depths.len(), gold.len())));
    }
    check_edges(edges)?;
    let mut parts = vec![(Vec::new(), Vec::new()); edges.len() + 1];
    for ((&p, &g), &d) in predictions.iter().zip(gold).zip(depths) {
        let part = &mut parts[range_index(edges, d)];
        part.0.push(p);
        part.1.push(g);
    }
    Ok(range_labels(edges)
        .into_iter()
        .zip(parts)
        .map(|(range, (p, g))| RangeReport {
            range,
            report: confusion(&p, &g),
        })
        .collect())
}

const REPORT_HEADER: &str = "precision,recall,f1,accuracy,tp,fp,tn,fn,precision_undefined,recall_undefined,f1_undefined,empty";

fn report_fields(r: &EvalReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        r.precision,
        r.recall,
        r.f1,
        r.accuracy,
        r.tp,
        r.fp,
        r.tn,
        r.fn_,
        r.precision_undefined,
        r.recall_undefined,
        r.f1_undefined,
        r.empty
    )
}

pub fn write_report_csv<W: Write>(report: &EvalReport, mut w: W) -> Result<()> {
    writeln!(w, "{REPORT_HEADER}")?;
    writeln!(w, "{}", report_fields(report))?;
    Ok(())
}

pub fn write_range_reports_csv<W: Write>(reports: &[RangeReport], mut w: W) -> Result<()> {
    writeln!(w, "range,{REPORT_HEADER}")?;
    for r in reports {
        writeln!(w, "\"{}\",{}", r.range, report_fields(&r.report))?;
    }
    Ok(())
}

/// How [`sweep_k`] obtains a model for each K.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    /// One trained model, evaluated with the first K pairs of each set.
    #[default]
    Reinfer,
    /// A fresh model trained with K pairs for every K.
    Retrain,
}

impl fmt::Display for SweepMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepMode::Reinfer => "reinfer",
            SweepMode::Retrain => "retrain",
        })
    }
}

impl FromStr for SweepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reinfer" => Ok(SweepMode::Reinfer),
            "retrain" => Ok(SweepMode::Retrain),
            other => Err(Error::invalid(format!("unknown sweep mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub k: usize,
    pub strategy: Strategy,
    pub report: EvalReport,
}

/// Evaluates `model` on `test` under every strategy.
pub fn evaluate_strategies<T: Scalar>(
    model: &ContextClassifier<T>,
    test: &[(EvidenceSet, Label)],
    strategies: &[Strategy],
) -> Result<Vec<(Strategy, EvalReport)>> {
    let bundles = test
        .iter()
        .map(|(s, _)| model.predict(s, Strategy::Avg))
        .collect::<Result<Vec<_>>>()?;
    let gold: Vec<Label> = test.iter().map(|(_, l)| *l).collect();
    strategies
        .iter()
        .map(|&strategy| {
            let pred: Vec<Label> = bundles.iter().map(|b| b.restrategize(strategy).label).collect();
            Ok((strategy, evaluate(&pred, &gold)?))
        })
        .collect()
}

/// K-vs-report grid, ordered by K as given and then by [`Strategy::ALL`].
///
/// Evidence sets should hold at least `max(k_values)` pairs; sets with
/// fewer simply use all of theirs.
pub fn sweep_k<T: Scalar>(
    model: &ContextClassifier<T>,
    train: &[(EvidenceSet, Label)],
    test: &[(EvidenceSet, Label)],
    k_values: &[usize],
    mode: SweepMode,
) -> Result<Vec<SweepCell>> {
    if k_values.is_empty() {
        return Err(Error::invalid("no K values to sweep"));
    }
    if let Some(&k) = k_values.iter().find(|&&k| k == 0) {
        return Err(Error::invalid(format!("K must be at least 1, got {k}")));
    }
    let mut cells = Vec::new();
    for &k in k_values {
        let mut m = match mode {
            SweepMode::Reinfer => model.clone(),
            SweepMode::Retrain => {
                let config = crate::classifier::ClassifierConfig { k, ..*model.config() };
                let mut fresh = ContextClassifier::new(config, model.mode(), model.encoder().vocab().clone())?;
                fresh.train(train)?;
                fresh
            }
        };
        m.set_k(k)?;
        for (strategy, report) in evaluate_strategies(&m, test, &Strategy::ALL)? {
            cells.push(SweepCell { k, strategy, report });
        }
    }
    Ok(cells)
}

pub fn write_sweep_csv<W: Write>(cells: &[SweepCell], mut w: W) -> Result<()> {
    writeln!(w, "k,strategy,{REPORT_HEADER}")?;
    for c in cells {
        writeln!(w, "{},{},{}", c.k, c.strategy, report_fields(&c.report))?;
    }
    Ok(())
}
