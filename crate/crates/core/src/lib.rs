//! Unsupervised single-review abstractive summarization with latent
//! non-projective discourse trees.
//!
//! The library induces a dependency tree over the sentences of a review via
//! Matrix-Tree structured attention, ranks sentences with a PageRank-style
//! recursion over the tree marginals, reconstructs every sentence from its
//! soft parent to train the whole stack without supervision, and decodes a
//! one-sentence summary from the root embedding by beam search.
//!
//! Modules:
//! - [`numkit`]: dense linear algebra (LU inverse/log-determinant), a
//!   reverse-mode differentiation tape over `f64` matrices, Adagrad, and
//!   finite-difference utilities used as gradient oracles in tests.
//! - [`corpus`]: JSON Lines ingestion, sentence splitting, tokenization,
//!   vocabulary construction, truncation and batching.
//! - [`model`]: parameter container (embeddings, bi-GRU encoder, structure
//!   scorer, parent combiner, GRU decoder) with a canonical visitation order.
//! - [`encoder`]: bi-GRU sentence encoding with max-pooling and the
//!   semantic/structure embedding split.
//! - [`structattn`]: edge scores, Matrix-Tree marginals, enumeration oracles.
//! - [`reconstructor`]: reconstruction loss, training step, beam search.
//! - [`discourse`]: DiscourseRank, root reranking, Chu–Liu–Edmonds decoding,
//!   projectivity and tree statistics.
//! - [`evalkit`]: ROUGE-1/2/L F1 scoring and corpus evaluation.
//! - [`pipeline`] / [`trainer`] / [`checkpoint`] / [`config`]: end-to-end
//!   inference, the epoch loop with resumable checkpoints, and run
//!   configuration.

pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod discourse;
pub mod encoder;
pub mod error;
pub mod evalkit;
pub mod model;
pub mod numkit;
pub mod pipeline;
pub mod reconstructor;
pub mod structattn;
pub mod trainer;

pub use error::{CoreError, Result};
