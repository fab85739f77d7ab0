//! Depth metrics, evidence-based classification and taxonomy propagation
//! for commonsense knowledge triples.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the bottom of this file fix the common `f64` instantiations.

pub mod classifier;
pub mod depth;
pub mod error;
pub mod eval;
pub mod lm;
pub mod retrieval;
pub mod nn;
pub mod propagation;
pub mod scalar;
pub mod synthetic;
pub mod text;
pub mod triple;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use triple::{
    parse_triple_file, parse_triples, render_template, rephrase_relation, write_triple_file, Label,
    LabeledTriple, RelationPhrase, RenderedSentence, TripleKey,
};

pub type Bigram64 = lm::BigramLm<f64>;
pub type Encoder64 = nn::TransformerEncoder<f64>;
pub type DepthScore64 = depth::DepthScore<f64>;
pub type Classifier32 = classifier::ContextClassifier<f32>;
pub type Classifier64 = classifier::ContextClassifier<f64>;
