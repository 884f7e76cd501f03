//! Transportation-mode classification from GPS trajectories with
//! discretized-feature embeddings and bidirectional Maxout GRUs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod discretize;
pub mod embed;
pub mod encoding;
pub mod eval;
pub mod geo;
pub mod ingest;
pub mod linalg;
pub mod model_io;
pub mod pipeline;
pub mod preprocess;
pub mod rnn;
pub mod synth;
pub mod train;
