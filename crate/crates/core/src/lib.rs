//! Clustering of keyword-search answer trees over triple graphs.
//!
//! The crate loads a directed labelled graph from TSV ([`graph`]), answers
//! multi-keyword relationship queries with minimal rooted trees
//! ([`search`]), represents every tree by a pair of smoothed language models
//! ([`lm`]) and groups the trees by Jensen-Shannon distance with complete-link
//! clustering and Calinski-Harabasz model selection ([`cluster`]). Two
//! structural baselines live in [`baseline`]; [`eval`] holds judgment-pair
//! sampling and NDCG; [`pipeline`] wires the stages together.

pub mod baseline;
pub mod cluster;
pub mod eval;
pub mod graph;
pub mod lm;
pub mod pipeline;
pub mod search;

pub use cluster::{Clustering, DistanceMatrix, Heuristic};
pub use graph::{Graph, GraphError, Term, Triple};
pub use lm::{LanguageModel, LmParams, TreeLm};
pub use pipeline::{run_pipeline, ClusterDocument, Method, PipelineConfig, PipelineError};
pub use search::{AnswerTree, KeywordQuery};
