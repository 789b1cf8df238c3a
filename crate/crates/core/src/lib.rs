//! Graph-to-sequence AMR-to-text generation.
//!
//! The pipeline: [`amr`] parses PENMAN graphs and linearizes them,
//! [`embed`] turns tokens into input vectors, [`graph_encoder`] (graph-state
//! LSTM) or [`seq_encoder`] (BiLSTM over the linearization) builds the
//! attention memory, and [`decoder`] generates text with attention, coverage
//! and copying. [`train`] fits a [`model::Model`]; [`bleu`] scores output.

pub mod amr;
pub mod bleu;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod decoder;
pub mod embed;
mod error;
pub mod graph_encoder;
pub mod lstm;
pub mod model;
pub mod seq_encoder;
pub mod train;
pub mod vocab;

pub use error::{Error, Result};
