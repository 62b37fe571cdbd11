//! Domain filtering, stance-anchored user profiling and stance-QA evaluation
//! for social-media corpora.
//!
//! The pipeline runs in stages, each backed by one module:
//!
//! * [`corpus`] ingests tweets and the retweet graph.
//! * [`knowledge`] expands a knowledge-graph snapshot and chunks its documents.
//! * [`filter`] labels tweets by mean distance to their nearest knowledge chunks
//!   and distils those labels into a linear classifier.
//! * [`community`] finds retweet communities, samples users and splits them.
//! * [`pooling`] reduces each user's history to a bounded tweet pool.
//! * [`profiling`] builds abstractive and extractive profiles through an
//!   [`llm`] gateway.
//! * [`retrieval`] provides the BM25, dense and aspect-selection baselines.
//! * [`evaluation`] runs open-book stance QA and the statistics suite.

pub mod community;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod filter;
#[cfg(feature = "remote")]
pub mod http;
pub mod knowledge;
pub mod llm;
pub mod metrics;
pub mod pooling;
pub mod pipeline;
pub mod profiling;
pub mod retrieval;
pub mod synth;
pub mod text;

pub use error::{Error, Result};
