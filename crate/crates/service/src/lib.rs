//! Two-pass search: hard-filter retrieval from an inverted index with a
//! match-fraction first pass, then second-pass scoring by a ranking model
//! using member embeddings precomputed in the forward index and query
//! embeddings computed per request.

mod http;
mod index;
mod search;

pub use http::{router, serve};
pub use index::{query_embedding, retrieve, Candidate, ForwardEntry, InvertedIndex};
pub use search::{second_pass_rank, SearchRequest, SearchResponse, SearchResult, SearchService, ServiceError, Snapshot};

/// Candidates retrieved before second-pass scoring unless configured otherwise.
pub const DEFAULT_RETRIEVAL_BUDGET: usize = 1000;
