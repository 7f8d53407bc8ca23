//! Unified chit-chat and task-oriented response generation with
//! prompt-controlled transition sentences.
//!
//! The pipeline has three stages: a unified decoder trained on both dialogue
//! modes, a discrete-prompt model fine-tuned on transition turns, and a
//! continuous-prompt model where a frozen mode classifier feeds an LSTM
//! bridge that writes the two prompt embeddings of the frozen decoder.

pub mod bridge;
pub mod checkpoints;
pub mod classifier;
pub mod codec;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod lm;
pub mod sampling;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
