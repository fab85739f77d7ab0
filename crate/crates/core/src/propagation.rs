//! Candidate generation and taxonomy propagation for building deep triples.
//!
//! A generator scores tails after `head relation-phrase`; beam search turns
//! it into candidate set S1. Propagating attributes `(relation, tail)` along
//! a hypernym forest gives S2, and the members of S2 not already in S1 whose
//! depth rank passes a threshold are the deep candidates.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use num_traits::{Float, One, Zero};
use rand_chacha::ChaCha8Rng;

use crate::depth::depth_rank;
use crate::error::{Error, Result};
use crate::lm::{LanguageBackend, TokenId, TrainableLm};
use crate::nn::{Adam, Gradients};
use crate::scalar::Scalar;
use crate::triple::{render_template, rephrase_relation, Label, LabeledTriple, TripleKey};

fn normalize(term: &str) -> String {
    term.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Hypernym forest read from `child\tparent` edges.
#[derive(Debug, Clone, Default)]
pub struct TaxonomyTree {
    names: Vec<String>,
    index: HashMap<String, usize>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
}

impl TaxonomyTree {
    /// Builds the forest; a child with two parents or a cycle is an error.
    pub fn from_edges<I, S>(edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S)>,
        S: AsRef<str>,
    {
        let mut tree = TaxonomyTree::default();
        for (child, parent) in edges {
            let c = tree.intern(child.as_ref())?;
            let p = tree.intern(parent.as_ref())?;
            if c == p {
                return Err(Error::Taxonomy(format!("{:?} is its own parent", tree.names[c])));
            }
            match tree.parent[c] {
                Some(existing) if existing != p => {
                    return Err(Error::Taxonomy(format!(
                        "{:?} has two parents ({:?} and {:?})",
                        tree.names[c], tree.names[existing], tree.names[p]
                    )))
                }
                Some(_) => continue,
                None => {}
            }
            let mut a = Some(p);
            while let Some(x) = a {
                if x == c {
                    return Err(Error::Taxonomy(format!("cycle through {:?}", tree.names[c])));
                }
                a = tree.parent[x];
            }
            tree.parent[c] = Some(p);
            tree.children[p].push(c);
        }
        for ch in &mut tree.children {
            ch.sort_unstable();
        }
        Ok(tree)
    }

    /// Reads `child\tparent` lines; blank lines and `#` comments are skipped.
    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut edges = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 2 {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected `child<TAB>parent`, found {} fields", f.len()),
                });
            }
            edges.push((f[0].to_string(), f[1].to_string()));
        }
        Self::from_edges(edges)
    }

    fn intern(&mut self, term: &str) -> Result<usize> {
        let key = normalize(term);
        if key.is_empty() {
            return Err(Error::Taxonomy("empty term".into()));
        }
        if let Some(&i) = self.index.get(&key) {
            return Ok(i);
        }
        let i = self.names.len();
        self.names.push(term.split_whitespace().collect::<Vec<_>>().join(" "));
        self.index.insert(key, i);
        self.parent.push(None);
        self.children.push(Vec::new());
        Ok(i)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Every term, in first-seen order.
    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn contains(&self, term: &str) -> bool {
        self.index.contains_key(&normalize(term))
    }

    fn id(&self, term: &str) -> Option<usize> {
        self.index.get(&normalize(term)).copied()
    }

    pub fn parent(&self, term: &str) -> Option<&str> {
        self.id(term).and_then(|i| self.parent[i]).map(|p| self.names[p].as_str())
    }

    pub fn children(&self, term: &str) -> Vec<&str> {
        self.id(term)
            .map(|i| self.children[i].iter().map(|&c| self.names[c].as_str()).collect())
            .unwrap_or_default()
    }

    /// Nodes exactly `depth` generations below `node`.
    fn generation(&self, node: usize, depth: usize) -> Vec<usize> {
        let mut level = vec![node];
        for _ in 0..depth {
            level = level.iter().flat_map(|&n| self.children[n].iter().copied()).collect();
        }
        level
    }

    /// `(descendant, generation gap)` for gaps `1..=max_distance`.
    pub fn descendants_within(&self, term: &str, max_distance: usize) -> Vec<(&str, usize)> {
        let Some(root) = self.id(term) else { return Vec::new() };
        (1..=max_distance)
            .flat_map(|g| self.generation(root, g).into_iter().map(move |n| (n, g)))
            .map(|(n, g)| (self.names[n].as_str(), g))
            .collect()
    }

    /// Same-generation relatives of `term` whose closest common ancestor is
    /// `g ≤ max_distance` generations up, with that `g`. Siblings have `g = 1`.
    pub fn relatives_within(&self, term: &str, max_distance: usize) -> Vec<(&str, usize)> {
        let Some(me) = self.id(term) else { return Vec::new() };
        let mut seen = HashSet::from([me]);
        let mut out = Vec::new();
        let mut ancestor = me;
        for g in 1..=max_distance {
            let Some(p) = self.parent[ancestor] else { break };
            ancestor = p;
            for n in self.generation(ancestor, g) {
                if seen.insert(n) {
                    out.push((self.names[n].as_str(), g));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Provenance {
    Generated,
    Horizontal,
    Vertical,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Generated => "generated",
            Provenance::Horizontal => "horizontal",
            Provenance::Vertical => "vertical",
        })
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generated" => Ok(Provenance::Generated),
            "horizontal" => Ok(Provenance::Horizontal),
            "vertical" => Ok(Provenance::Vertical),
            other => Err(Error::invalid(format!("unknown provenance {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateTriple {
    pub triple: LabeledTriple,
    pub provenance: Provenance,
    pub source_head: String,
    /// Propagation distance; absent for generated candidates.
    pub distance: Option<usize>,
    pub depth_rank: Option<f64>,
}

impl CandidateTriple {
    pub fn generated(triple: LabeledTriple) -> Self {
        CandidateTriple {
            source_head: triple.head.clone(),
            triple,
            provenance: Provenance::Generated,
            distance: None,
            depth_rank: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            steps: 200,
            learning_rate: 0.1,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Token ids of `head phrase tail </t>` and the range of tail and end-of-term positions.
pub fn generator_sequence<B: LanguageBackend + ?Sized>(
    triple: &LabeledTriple,
    backend: &B,
) -> Result<(Vec<TokenId>, std::ops::Range<usize>)> {
    let rendered = render_template(triple);
    let seq = backend.tokenize(&rendered.text);
    let tail = seq.tokens_within(&rendered.tail_chars);
    if tail.is_empty() {
        return Err(Error::invalid(format!("tail of {triple} has no tokens")));
    }
    let mut ids = seq.ids;
    ids.push(backend.descriptor().special.end_of_term);
    Ok((ids, tail.start..tail.end + 1))
}

/// Fits `backend` to the tail tokens (and the end-of-term marker) of `triples`.
///
/// Returns the mean per-triple loss after each step.
pub fn train_generator<B: TrainableLm>(
    triples: &[LabeledTriple],
    backend: &mut B,
    config: &GeneratorConfig,
) -> Result<Vec<B::Scalar>> {
    if triples.is_empty() {
        return Err(Error::invalid("no triples to train the generator on"));
    }
    if !backend.descriptor().supports_training {
        return Err(Error::Capability {
            backend: backend.descriptor().name.clone(),
            capability: "training",
        });
    }
    let seqs: Vec<_> = triples
        .iter()
        .map(|t| generator_sequence(t, &*backend))
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    let mut cursor = order.len();
    let batch = config.batch_size.max(1).min(seqs.len());
    let mut adam = Adam::new(B::Scalar::of(config.learning_rate));
    let mut curve = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let mut grads = Gradients::default();
        let mut loss = B::Scalar::zero();
        for _ in 0..batch {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let (ids, targets) = &seqs[order[cursor]];
            cursor += 1;
            let (l, g) = backend.masked_nll(ids, targets.clone())?;
            loss += l;
            grads.accumulate(&g);
        }
        let inv = B::Scalar::one() / B::Scalar::of_usize(batch);
        loss *= inv;
        grads.scale(inv);
        if !loss.is_finite() || !grads.norm().is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        adam.step(backend.parameters_mut(), &grads);
        curve.push(loss);
    }
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis<T> {
    /// Generated tokens, ending with the end-of-term token unless cut at `max_len`.
    pub tokens: Vec<TokenId>,
    pub logprob: T,
}

fn rank_order<T: Scalar>(a: &Hypothesis<T>, b: &Hypothesis<T>) -> Ordering {
    b.logprob
        .partial_cmp(&a.logprob)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Length-capped beam search continuing `prefix`.
///
/// Each step expands every live hypothesis by every token of finite
/// log-probability and keeps the best `width` extensions; those ending in the
/// end-of-term token are set aside as complete. Results are sorted by total
/// log-probability, ties broken by the lexicographically smaller token ids.
pub fn beam_search<B: LanguageBackend + ?Sized>(
    prefix: &[TokenId],
    backend: &B,
    width: usize,
    max_len: usize,
) -> Result<Vec<Hypothesis<B::Scalar>>> {
    if width == 0 || max_len == 0 {
        return Err(Error::invalid("beam width and max_len must be at least 1"));
    }
    let end = backend.descriptor().special.end_of_term;
    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        logprob: B::Scalar::zero(),
    }];
    let mut done = Vec::new();
    let mut context = prefix.to_vec();
    for step in 1..=max_len {
        let mut expanded = Vec::new();
        for h in &live {
            context.truncate(prefix.len());
            context.extend_from_slice(&h.tokens);
            let dist = backend.next_token_logprobs(&context)?;
            for (id, &lp) in dist.logprobs().iter().enumerate() {
                if lp == B::Scalar::neg_infinity() {
                    continue;
                }
                let mut tokens = h.tokens.clone();
                tokens.push(id as TokenId);
                expanded.push(Hypothesis {
                    tokens,
                    logprob: h.logprob + lp,
                });
            }
        }
        expanded.sort_by(rank_order);
        expanded.truncate(width);
        live.clear();
        for h in expanded {
            if step == max_len || h.tokens.last() == Some(&end) {
                done.push(h);
            } else {
                live.push(h);
            }
        }
        if live.is_empty() {
            break;
        }
    }
    done.sort_by(rank_order);
    done.truncate(width);
    Ok(done)
}

/// Beam-decodes tails for each `(head, relation)`; S1 with duplicates removed.
///
/// Hypotheses that are empty or contain special tokens besides the final
/// end-of-term marker are discarded.
pub fn generate_candidates<B: LanguageBackend + ?Sized>(
    pairs: &[(String, String)],
    backend: &B,
    width: usize,
    max_len: usize,
) -> Result<Vec<CandidateTriple>> {
    let special = backend.descriptor().special;
    let specials = special.all();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (head, relation) in pairs {
        let phrase = rephrase_relation(relation)?.phrase;
        let prefix = backend.tokenize(&format!("{} {phrase}", head.trim())).ids;
        for h in beam_search(&prefix, backend, width, max_len)? {
            let body = h.tokens.strip_suffix(&[special.end_of_term]).unwrap_or(&h.tokens);
            if body.is_empty() || body.iter().any(|t| specials.contains(t)) {
                continue;
            }
            let triple = LabeledTriple::new(head, relation, &backend.detokenize(body))?;
            if seen.insert(triple.key()) {
                out.push(CandidateTriple::generated(triple));
            }
        }
    }
    Ok(out)
}

/// Keeps one candidate per key: smallest distance, then smallest source head, then provenance.
fn dedup(cands: impl IntoIterator<Item = CandidateTriple>) -> Vec<CandidateTriple> {
    let mut best: BTreeMap<TripleKey, CandidateTriple> = BTreeMap::new();
    for c in cands {
        let rank = |c: &CandidateTriple| (c.distance, c.source_head.clone(), c.provenance);
        match best.get(&c.triple.key()) {
            Some(b) if rank(b) <= rank(&c) => {}
            _ => {
                best.insert(c.triple.key(), c);
            }
        }
    }
    best.into_values().collect()
}

fn propagated(source: &CandidateTriple, head: &str, provenance: Provenance, distance: usize) -> Result<CandidateTriple> {
    let t = &source.triple;
    Ok(CandidateTriple {
        triple: LabeledTriple::new(head, &t.relation, &t.tail)?,
        provenance,
        source_head: t.head.clone(),
        distance: Some(distance),
        depth_rank: None,
    })
}

fn check_distance(max_distance: usize) -> Result<()> {
    if max_distance < 1 {
        return Err(Error::invalid("max_distance must be at least 1"));
    }
    Ok(())
}

/// Copies each source attribute to same-generation relatives of its head.
///
/// Output is sorted by triple key.
pub fn horizontal_propagate(
    tree: &TaxonomyTree,
    sources: &[CandidateTriple],
    max_distance: usize,
) -> Result<Vec<CandidateTriple>> {
    check_distance(max_distance)?;
    let mut out = Vec::new();
    for s in sources {
        for (relative, g) in tree.relatives_within(&s.triple.head, max_distance) {
            out.push(propagated(s, relative, Provenance::Horizontal, g)?);
        }
    }
    Ok(dedup(out))
}

/// Copies each source attribute to descendants of its head within `max_distance` generations.
///
/// Output is sorted by triple key.
pub fn vertical_propagate(
    tree: &TaxonomyTree,
    sources: &[CandidateTriple],
    max_distance: usize,
) -> Result<Vec<CandidateTriple>> {
    check_distance(max_distance)?;
    let mut out = Vec::new();
    for s in sources {
        for (child, g) in tree.descendants_within(&s.triple.head, max_distance) {
            out.push(propagated(s, child, Provenance::Vertical, g)?);
        }
    }
    Ok(dedup(out))
}

/// S2: the union of horizontal and vertical propagation, one entry per triple.
pub fn propagate(
    tree: &TaxonomyTree,
    sources: &[CandidateTriple],
    horizontal_distance: usize,
    vertical_distance: usize,
) -> Result<Vec<CandidateTriple>> {
    let h = horizontal_propagate(tree, sources, horizontal_distance)?;
    let v = vertical_propagate(tree, sources, vertical_distance)?;
    Ok(dedup(h.into_iter().chain(v)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepCandidates {
    /// Candidates above the threshold, deepest first.
    pub kept: Vec<CandidateTriple>,
    /// Candidates that could not be scored, with the reason.
    pub dropped: Vec<(CandidateTriple, String)>,
}

/// Scores `S2 \ S1` and keeps the members whose depth rank exceeds `threshold`.
pub fn build_deep_candidates<B: LanguageBackend + ?Sized>(
    s1: &[CandidateTriple],
    s2: &[CandidateTriple],
    backend: &B,
    threshold: f64,
) -> DeepCandidates {
    let known: HashSet<TripleKey> = s1.iter().map(|c| c.triple.key()).collect();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for c in dedup(s2.iter().cloned()) {
        if known.contains(&c.triple.key()) {
            continue;
        }
        match depth_rank(&c.triple, backend) {
            Ok(r) => {
                let r = r.as_f64();
                if r > threshold {
                    kept.push(CandidateTriple {
                        depth_rank: Some(r),
                        ..c
                    });
                }
            }
            Err(e) => dropped.push((c, e.to_string())),
        }
    }
    kept.sort_by(|a, b| {
        b.depth_rank
            .partial_cmp(&a.depth_rank)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.triple.key().cmp(&b.triple.key()))
    });
    DeepCandidates { kept, dropped }
}

/// Attempts per negative before giving up.
pub const NEGATIVE_SAMPLING_ATTEMPTS: usize = 1000;

/// `count` corrupted copies of random positives, each with one field replaced
/// by an observed value of that field and none equal to a positive.
pub fn negative_sample(positives: &[LabeledTriple], count: usize, seed: u64) -> Result<Vec<LabeledTriple>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if positives.is_empty() {
        return Err(Error::invalid("negative sampling needs at least one positive"));
    }
    let known: HashSet<TripleKey> = positives.iter().map(LabeledTriple::key).collect();
    let field_values = |f: fn(&LabeledTriple) -> &String| -> Vec<String> {
        positives.iter().map(|t| f(t).clone()).collect::<BTreeSet<_>>().into_iter().collect()
    };
    let vocab = [
        field_values(|t| &t.head),
        field_values(|t| &t.relation),
        field_values(|t| &t.tail),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut found = None;
        for _ in 0..NEGATIVE_SAMPLING_ATTEMPTS {
            let base = &positives[rng.random_range(0..positives.len())];
            let field = rng.random_range(0..3);
            let value = &vocab[field][rng.random_range(0..vocab[field].len())];
            let (h, r, t) = match field {
                0 => (value, &base.relation, &base.tail),
                1 => (&base.head, value, &base.tail),
                _ => (&base.head, &base.relation, value),
            };
            let candidate = LabeledTriple::new(h, r, t)?;
            if !known.contains(&candidate.key()) {
                found = Some(candidate.with_label(Label::Fictitious));
                break;
            }
        }
        out.push(found.ok_or(Error::Saturation {
            attempts: NEGATIVE_SAMPLING_ATTEMPTS,
        })?);
    }
    Ok(out)
}

const CANDIDATE_HEADER: [&str; 7] = ["head", "relation", "tail", "provenance", "source_head", "distance", "depth_rank"];

fn candidate_fields(c: &CandidateTriple) -> [String; 7] {
    [
        c.triple.head.clone(),
        c.triple.relation.clone(),
        c.triple.tail.clone(),
        c.provenance.to_string(),
        c.source_head.clone(),
        c.distance.map(|d| d.to_string()).unwrap_or_default(),
        c.depth_rank.map(|r| r.to_string()).unwrap_or_default(),
    ]
}

pub fn write_candidates_tsv<W: Write>(cands: &[CandidateTriple], mut w: W) -> Result<()> {
    writeln!(w, "{}", CANDIDATE_HEADER.join("\t"))?;
    for c in cands {
        writeln!(w, "{}", candidate_fields(c).join("\t"))?;
    }
    Ok(())
}

/// Candidate TSV plus an empty `label` column for annotators.
pub fn write_annotation_sheet<W: Write>(cands: &[CandidateTriple], mut w: W) -> Result<()> {
    writeln!(w, "{}\tlabel", CANDIDATE_HEADER.join("\t"))?;
    for c in cands {
        writeln!(w, "{}\t", candidate_fields(c).join("\t"))?;
    }
    Ok(())
}

pub fn read_candidates_tsv<R: BufRead>(reader: R) -> Result<Vec<CandidateTriple>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { line: i + 1, message };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != CANDIDATE_HEADER.len() {
            return Err(err(format!("expected {} fields, found {}", CANDIDATE_HEADER.len(), f.len())));
        }
        fn opt(s: &str) -> Option<&str> {
            (!s.is_empty()).then_some(s)
        }
        out.push(CandidateTriple {
            triple: LabeledTriple::new(f[0], f[1], f[2]).map_err(|e| err(e.to_string()))?,
            provenance: f[3].parse().map_err(|e: Error| err(e.to_string()))?,
            source_head: f[4].to_string(),
            distance: opt(f[5])
                .map(str::parse)
                .transpose()
                .map_err(|_| err(format!("bad distance {:?}", f[5])))?,
            depth_rank: opt(f[6])
                .map(str::parse)
                .transpose()
                .map_err(|_| err(format!("bad depth rank {:?}", f[6])))?,
        });
    }
    Ok(out)
}

/// Sorts hypotheses the way [`beam_search`] reports them; exposed for oracles.
pub fn sort_hypotheses<T: Scalar>(h: &mut [Hypothesis<T>]) {
    h.sort_by(rank_order);
}
