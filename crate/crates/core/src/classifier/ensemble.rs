use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::triple::{Label, LabeledTriple};

/// Rule combining the per-pair distributions of one triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Strategy {
    #[default]
    Avg,
    Max,
    Vote,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Avg, Strategy::Max, Strategy::Vote];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Avg => "avg",
            Strategy::Max => "max",
            Strategy::Vote => "vote",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "avg" => Ok(Strategy::Avg),
            "max" => Ok(Strategy::Max),
            "vote" => Ok(Strategy::Vote),
            other => Err(Error::invalid(format!("unknown strategy {other:?}; expected avg, max or vote"))),
        }
    }
}

const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Rejects empty input and anything that is not a probability distribution.
pub fn check_distributions<T: Scalar>(per_pair: &[[T; 2]]) -> Result<()> {
    if per_pair.is_empty() {
        return Err(Error::invalid("at least one per-pair distribution is required"));
    }
    for (k, p) in per_pair.iter().enumerate() {
        let ok = p.iter().all(|x| x.is_finite() && *x >= T::zero())
            && ((p[0] + p[1]).as_f64() - 1.0).abs() <= NORMALIZATION_TOLERANCE;
        if !ok {
            return Err(Error::invalid(format!("pair {k}: ({}, {}) is not a distribution", p[0], p[1])));
        }
    }
    Ok(())
}

fn argmax<T: Scalar>(s: [T; 2]) -> Label {
    if s[1] >= s[0] {
        Label::Valid
    } else {
        Label::Fictitious
    }
}

/// The two per-class scores a strategy compares: mean probabilities, maximum
/// probabilities, or vote shares.
pub fn strategy_scores<T: Scalar>(per_pair: &[[T; 2]], strategy: Strategy) -> Result<[T; 2]> {
    check_distributions(per_pair)?;
    let k = T::of_usize(per_pair.len());
    Ok(match strategy {
        Strategy::Avg => {
            let sum = per_pair.iter().fold([T::zero(); 2], |a, p| [a[0] + p[0], a[1] + p[1]]);
            [sum[0] / k, sum[1] / k]
        }
        Strategy::Max => per_pair
            .iter()
            .fold([T::neg_infinity(); 2], |a, p| [a[0].max(p[0]), a[1].max(p[1])]),
        Strategy::Vote => {
            let n1 = per_pair.iter().filter(|p| argmax(**p) == Label::Valid).count();
            [T::of_usize(per_pair.len() - n1) / k, T::of_usize(n1) / k]
        }
    })
}

/// Label under `strategy`; ties go to [`Label::Valid`].
pub fn predict<T: Scalar>(per_pair: &[[T; 2]], strategy: Strategy) -> Result<Label> {
    strategy_scores(per_pair, strategy).map(argmax)
}

pub fn predict_avg<T: Scalar>(per_pair: &[[T; 2]]) -> Result<Label> {
    predict(per_pair, Strategy::Avg)
}

pub fn predict_max<T: Scalar>(per_pair: &[[T; 2]]) -> Result<Label> {
    predict(per_pair, Strategy::Max)
}

pub fn predict_vote<T: Scalar>(per_pair: &[[T; 2]]) -> Result<Label> {
    predict(per_pair, Strategy::Vote)
}

/// Lower bound applied to the gold-class probability before taking the log.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvidenceLoss<T> {
    pub value: T,
    /// Some gold probability was below [`PROBABILITY_FLOOR`] and was raised to it.
    pub clamped: bool,
}

/// Mean over pairs of `−ln p[gold]`.
pub fn evidence_loss<T: Scalar>(per_pair: &[[T; 2]], gold: Label) -> Result<EvidenceLoss<T>> {
    check_distributions(per_pair)?;
    let floor = T::of(PROBABILITY_FLOOR);
    let mut clamped = false;
    let mut total = T::zero();
    for p in per_pair {
        let g = p[gold.index()];
        clamped |= g < floor;
        total -= g.max(floor).ln();
    }
    Ok(EvidenceLoss {
        value: total / T::of_usize(per_pair.len()),
        clamped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBundle<T> {
    pub per_pair: Vec<[T; 2]>,
    pub scores: [T; 2],
    pub label: Label,
    pub strategy: Strategy,
}

impl<T: Scalar> PredictionBundle<T> {
    pub fn new(per_pair: Vec<[T; 2]>, strategy: Strategy) -> Result<Self> {
        let scores = strategy_scores(&per_pair, strategy)?;
        Ok(PredictionBundle {
            label: argmax(scores),
            per_pair,
            scores,
            strategy,
        })
    }

    pub fn restrategize(&self, strategy: Strategy) -> Self {
        Self::new(self.per_pair.clone(), strategy).expect("bundle holds validated distributions")
    }
}

/// CSV with header `head,relation,tail,p0,p1,label,strategy`; `p0`/`p1` are the strategy scores.
pub fn write_predictions_csv<T: Scalar, W: Write>(rows: &[(LabeledTriple, PredictionBundle<T>)], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["head", "relation", "tail", "p0", "p1", "label", "strategy"])?;
    for (t, b) in rows {
        out.write_record([
            t.head.as_str(),
            &t.relation,
            &t.tail,
            &b.scores[0].as_f64().to_string(),
            &b.scores[1].as_f64().to_string(),
            &b.label.index().to_string(),
            &b.strategy.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
