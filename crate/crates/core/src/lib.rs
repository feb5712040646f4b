//! Address matching: BM25 retrieval over a structured address corpus, a
//! score-gap gate, and component-weighted string similarity re-ranking.

pub mod analyzer;
pub mod bm25;
pub mod corpus;
pub mod eval;
pub mod index;
pub mod matcher;
pub mod reranker;
