//! ASR-error robust intent detection.
//!
//! A small bidirectional language model is finetuned so that acoustically
//! confusable words receive close representations, phoneme-level features
//! are added per word, and a self-attentive classifier consumes both.

pub mod calibrated_lm;
pub mod checkpoint;
pub mod confusion;
pub mod corpus;
pub mod error;
pub mod harness;
pub mod idm;
pub mod nn;
pub mod phonology;
pub mod prm;

pub use error::{Error, Result};
