//! Depth rank, perplexity and the statistics built on them.
//!
//! The depth rank of a triple is the mean 1-based rank of each tail token
//! under an autoregressive model that has seen the head, the relation phrase
//! and the preceding tail tokens. Perplexity covers the whole rendered
//! sentence, conditioned on sequence start.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Read, Write};

use num_traits::{Float, Zero};

use crate::error::{Error, Result};
use crate::lm::{LanguageBackend, TokenSequence};
use crate::scalar::Scalar;
use crate::triple::{render_template, LabeledTriple, RenderedSentence, TripleKey};

/// Boundary above which a triple counts as deep under a GPT-2-class scorer.
pub const DEFAULT_DEEP_THRESHOLD: f64 = 2000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthScore<T> {
    pub triple: LabeledTriple,
    pub depth_rank: T,
    pub perplexity: T,
    pub backend_name: String,
}

impl<T: Scalar> DepthScore<T> {
    /// True when some token had zero probability and the perplexity is infinite.
    pub fn is_degenerate(&self) -> bool {
        self.perplexity.is_infinite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    DepthRank,
    Perplexity,
}

impl Metric {
    pub fn of<T: Scalar>(self, s: &DepthScore<T>) -> T {
        match self {
            Metric::DepthRank => s.depth_rank,
            Metric::Perplexity => s.perplexity,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::DepthRank => "depth_rank",
            Metric::Perplexity => "perplexity",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "depth_rank" => Ok(Metric::DepthRank),
            "perplexity" => Ok(Metric::Perplexity),
            other => Err(Error::invalid(format!("unknown metric {other:?}"))),
        }
    }
}

fn tokenize_sentence<B: LanguageBackend + ?Sized>(
    triple: &LabeledTriple,
    backend: &B,
) -> Result<(RenderedSentence, TokenSequence)> {
    let rendered = render_template(triple);
    let seq = backend.tokenize(&rendered.text);
    backend.descriptor().check_window(seq.len())?;
    Ok((rendered, seq))
}

/// Mean 1-based rank of the tail tokens; ties rank by ascending token id.
pub fn depth_rank<B: LanguageBackend + ?Sized>(triple: &LabeledTriple, backend: &B) -> Result<B::Scalar> {
    let (rendered, seq) = tokenize_sentence(triple, backend)?;
    let tail = seq.tokens_within(&rendered.tail_chars);
    if tail.is_empty() {
        return Err(Error::invalid(format!("tail of {triple} has no tokens under the backend")));
    }
    let k = tail.len();
    let mut total = B::Scalar::zero();
    for i in tail {
        let dist = backend.next_token_logprobs(&seq.ids[..i])?;
        total += B::Scalar::of_usize(dist.rank_of(seq.ids[i]));
    }
    Ok(total / B::Scalar::of_usize(k))
}

/// `exp` of the mean token negative log-likelihood of the rendered sentence.
///
/// A zero-probability token yields `+inf`.
pub fn perplexity<B: LanguageBackend + ?Sized>(triple: &LabeledTriple, backend: &B) -> Result<B::Scalar> {
    let (_, seq) = tokenize_sentence(triple, backend)?;
    if seq.is_empty() {
        return Err(Error::invalid(format!("{triple} renders to no tokens")));
    }
    let mut nll = B::Scalar::zero();
    for i in 0..seq.len() {
        nll -= backend.next_token_logprobs(&seq.ids[..i])?.logprob(seq.ids[i]);
    }
    Ok((nll / B::Scalar::of_usize(seq.len())).exp())
}

pub fn score_triple<B: LanguageBackend + ?Sized>(
    triple: &LabeledTriple,
    backend: &B,
) -> Result<DepthScore<B::Scalar>> {
    Ok(DepthScore {
        triple: triple.clone(),
        depth_rank: depth_rank(triple, backend)?,
        perplexity: perplexity(triple, backend)?,
        backend_name: backend.descriptor().name.clone(),
    })
}

pub fn is_deep<T: Scalar>(score: &DepthScore<T>, threshold: T) -> bool {
    score.depth_rank > threshold
}

/// One equal-frequency group of scores.
///
/// `low`/`high` are the smallest and largest member metric values.
#[derive(Debug, Clone, PartialEq)]
pub struct BinStat<T> {
    pub bin_index: usize,
    pub low: T,
    pub high: T,
    pub member_count: usize,
    pub mean_annotated_depth: Option<T>,
    pub mean_metric: T,
}

fn by_value<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// Sorts scores by `metric` (stable) and splits them into `num_bins`
/// contiguous groups whose sizes differ by at most one, larger groups first.
pub fn bin_statistics<T: Scalar>(
    scores: &[DepthScore<T>],
    annotations: Option<&HashMap<TripleKey, T>>,
    metric: Metric,
    num_bins: usize,
) -> Result<Vec<BinStat<T>>> {
    if scores.is_empty() {
        return Err(Error::invalid("no scores to bin"));
    }
    if num_bins == 0 || num_bins > scores.len() {
        return Err(Error::invalid(format!(
            "cannot split {} scores into {num_bins} bins",
            scores.len()
        )));
    }
    let mut sorted: Vec<&DepthScore<T>> = scores.iter().collect();
    sorted.sort_by(|a, b| by_value(&metric.of(a), &metric.of(b)));

    let base = sorted.len() / num_bins;
    let extra = sorted.len() % num_bins;
    let mut out = Vec::with_capacity(num_bins);
    let mut start = 0;
    for bin_index in 0..num_bins {
        let size = base + usize::from(bin_index < extra);
        let members = &sorted[start..start + size];
        start += size;

        let values: Vec<T> = members.iter().map(|s| metric.of(s)).collect();
        let annotated: Vec<T> = annotations
            .map(|a| members.iter().filter_map(|s| a.get(&s.triple.key()).copied()).collect())
            .unwrap_or_default();
        out.push(BinStat {
            bin_index,
            low: values[0],
            high: values[values.len() - 1],
            member_count: size,
            mean_annotated_depth: mean(&annotated),
            mean_metric: mean(&values).expect("bins are non-empty"),
        });
    }
    Ok(out)
}

fn mean<T: Scalar>(xs: &[T]) -> Option<T> {
    (!xs.is_empty()).then(|| xs.iter().copied().sum::<T>() / T::of_usize(xs.len()))
}

/// Pearson product-moment correlation.
pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two observations".into()));
    }
    let mx = mean(x).expect("non-empty");
    let my = mean(y).expect("non-empty");
    let mut sxy = T::zero();
    let mut sxx = T::zero();
    let mut syy = T::zero();
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.max(-T::one()).min(T::one()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationProfile<T> {
    pub relation: String,
    pub mean_depth_rank: T,
    /// Population standard deviation.
    pub stddev_depth_rank: T,
    pub count: usize,
}

/// Mean and population standard deviation of depth rank per relation, sorted by relation.
pub fn relation_depth_profile<T: Scalar>(scores: &[DepthScore<T>]) -> Vec<RelationProfile<T>> {
    let mut groups: BTreeMap<&str, Vec<T>> = BTreeMap::new();
    for s in scores {
        groups.entry(s.triple.relation.as_str()).or_default().push(s.depth_rank);
    }
    groups
        .into_iter()
        .map(|(relation, ranks)| {
            let m = mean(&ranks).expect("groups are non-empty");
            let var = ranks.iter().map(|&r| (r - m) * (r - m)).sum::<T>() / T::of_usize(ranks.len());
            RelationProfile {
                relation: relation.to_string(),
                mean_depth_rank: m,
                stddev_depth_rank: var.sqrt(),
                count: ranks.len(),
            }
        })
        .collect()
}

/// Range index of `value` for `edges`: 0 is `(-inf, e0)`, `i` is `[e_{i-1}, e_i)`,
/// and `edges.len()` is the overflow range `[e_last, inf)`.
pub fn range_index<T: Scalar>(edges: &[T], value: T) -> usize {
    edges.iter().take_while(|&&e| value >= e).count()
}

pub fn check_edges<T: Scalar>(edges: &[T]) -> Result<()> {
    if edges.windows(2).any(|w| w[0] >= w[1]) || edges.iter().any(|e| e.is_nan()) {
        return Err(Error::invalid("range edges must be strictly increasing"));
    }
    Ok(())
}

/// Human-readable labels for the ranges produced by [`range_index`].
pub fn range_labels<T: Scalar>(edges: &[T]) -> Vec<String> {
    let mut labels = Vec::with_capacity(edges.len() + 1);
    let mut prev: Option<T> = None;
    for &e in edges {
        labels.push(match prev {
            None => format!("<{e}"),
            Some(p) => format!("[{p},{e})"),
        });
        prev = Some(e);
    }
    labels.push(match prev {
        None => "all".to_string(),
        Some(p) => format!(">={p}"),
    });
    labels
}

/// Share of depth ranks falling into each range of [`range_index`].
pub fn depth_distribution<T: Scalar>(scores: &[DepthScore<T>], edges: &[T]) -> Result<Vec<T>> {
    check_edges(edges)?;
    if scores.is_empty() {
        return Err(Error::invalid("no scores to distribute"));
    }
    let mut counts = vec![0usize; edges.len() + 1];
    for s in scores {
        counts[range_index(edges, s.depth_rank)] += 1;
    }
    let n = T::of_usize(scores.len());
    Ok(counts.into_iter().map(|c| T::of_usize(c) / n).collect())
}

const SCORE_HEADER: [&str; 6] = ["head", "relation", "tail", "depth_rank", "perplexity", "backend"];

pub fn write_scores_csv<T: Scalar, W: Write>(scores: &[DepthScore<T>], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SCORE_HEADER)?;
    for s in scores {
        out.write_record([
            s.triple.head.as_str(),
            &s.triple.relation,
            &s.triple.tail,
            &s.depth_rank.as_f64().to_string(),
            &s.perplexity.as_f64().to_string(),
            &s.backend_name,
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_scores_csv<T: Scalar, R: Read>(r: R) -> Result<Vec<DepthScore<T>>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().ne(SCORE_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", SCORE_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let err = |message: String| Error::Parse { line, message };
        let num = |j: usize| -> Result<T> {
            rec[j]
                .parse::<f64>()
                .map(T::of)
                .map_err(|_| err(format!("bad number {:?}", &rec[j])))
        };
        let triple = LabeledTriple::new(&rec[0], &rec[1], &rec[2]).map_err(|e| err(e.to_string()))?;
        out.push(DepthScore {
            triple,
            depth_rank: num(3)?,
            perplexity: num(4)?,
            backend_name: rec[5].to_string(),
        });
    }
    Ok(out)
}

/// Reads `head\trelation\ttail\tdepth` lines with depth in `[1, 4]`.
pub fn read_annotations<T: Scalar, R: BufRead>(r: R) -> Result<HashMap<TripleKey, T>> {
    let mut out = HashMap::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse { line: i + 1, message };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(err(format!("expected 4 tab-separated fields, found {}", f.len())));
        }
        let depth: f64 = f[3].trim().parse().map_err(|_| err(format!("bad depth {:?}", f[3])))?;
        if !(1.0..=4.0).contains(&depth) {
            return Err(err(format!("depth {depth} outside [1, 4]")));
        }
        let triple = LabeledTriple::new(f[0], f[1], f[2]).map_err(|e| err(e.to_string()))?;
        out.insert(triple.key(), T::of(depth));
    }
    Ok(out)
}
