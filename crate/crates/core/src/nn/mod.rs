//! Small neural-network toolkit: dense matrices, a reverse-mode tape,
//! attention and transformer blocks, and the Adam optimizer.

mod adam;
mod attention;
mod matrix;
mod params;
mod tape;
mod transformer;

pub use adam::Adam;
pub use attention::MultiHeadAttention;
pub use matrix::{Matrix, StoredMatrix};
pub use params::{glorot, normal, ParamSet};
pub use tape::{log_softmax, softmax_in_place, Gradients, NodeId, Tape};
pub use transformer::{EncoderConfig, TransformerEncoder};
