//! Topic discovery for scientific-abstract corpora.
//!
//! The pipeline embeds documents (externally, via EMB1 files), reduces the
//! embeddings with UMAP, clusters them with HDBSCAN and describes each cluster
//! with class-based TF-IDF term weights. Topic quality is scored with topic
//! diversity, inverted rank-biased overlap, NPMI and Cv coherence.

pub mod corpus;
pub mod embedding;
pub mod preprocess;
pub mod hdbscan;
pub mod umap;
pub mod topics;
pub mod metrics;
pub mod analysis;
pub mod llm_extract;
pub mod config;
pub mod cli;
