//! Faceted talent-search ranking toolkit.
//!
//! * [`corpus`]: profiles, queries, labeled sessions, time split, synthetic corpora.
//! * [`entity_graph`]: entity co-occurrence graphs and their empirical distributions.
//! * [`graph_embed`]: first/second-order proximity embeddings, pooling, similarity.
//! * [`neural`]: multilayer perceptron, pointwise and pairwise losses, SGD, gradient checks.
//! * [`ranker`]: feature assembly, session pair mining, ranker training and scoring.
//! * [`semantic_match`]: two-arm word-hashing model producing supervised entity embeddings.
//! * [`evaluation`]: offline replay with Prec@k and AUC.

pub mod corpus;
pub mod entity_graph;
pub mod error;
pub mod evaluation;
pub mod graph_embed;
pub mod neural;
pub mod ranker;
pub mod seed;
pub mod semantic_match;

pub use error::{Error, Result};
