//! Feature selection for wide tabular classification: Boruta filtering,
//! LIME ranking and a top-k classifier sweep.

pub mod boruta;
pub mod cli;
pub mod data;
pub mod determinism;
pub mod error;
pub mod evaluation;
pub mod learners;
pub mod lime;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
