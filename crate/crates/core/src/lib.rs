//! Jointly trained product-quantized dual encoder for dense retrieval, with
//! tools to explain which input words drive each discrete codeword.
//!
//! The pipeline: a bag-of-embeddings encoder maps queries and documents to
//! `D`-dimensional vectors; each vector is split into `M` sub-vectors, and
//! each sub-vector is replaced by the nearest of `K` centroids in its pool.
//! Encoder and codebooks are trained together with an in-batch ranking loss
//! plus a clustering loss. Integrated gradients then attribute each chosen
//! codeword to the input tokens, and a masking evaluation checks how well
//! those attributions pick out the tokens a codeword depends on.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, with `F32*` variants for single precision.

pub mod analysis;
pub mod attribution;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod model;
pub mod quantizer;
pub mod retrieval;
pub mod scalar;
pub mod synthetic;
pub mod trainer;

pub use corpus::{Corpus, Document, Qrels, QuerySet, TokenSeq, Vocabulary, UNK_ID, UNK_TOKEN};
pub use encoder::{DenseVec, EncoderDims};
pub use error::{Error, Result};
pub use model::ModelConfig;
pub use quantizer::{DiscreteCode, QuantIndex};
pub use scalar::Scalar;
pub use trainer::TrainConfig;

pub type Model = model::Model<f64>;
pub type EncoderParams = encoder::EncoderParams<f64>;
pub type Codebooks = quantizer::Codebooks<f64>;
pub type AttributionMatrix = attribution::AttributionMatrix<f64>;
pub type ScoreTable = retrieval::ScoreTable<f64>;

pub type F32Model = model::Model<f32>;
pub type F32EncoderParams = encoder::EncoderParams<f32>;
pub type F32Codebooks = quantizer::Codebooks<f32>;
