//! Extraction of probabilistic automata from recurrent-classifier traces:
//! hidden-state clustering, prefix-tree state merging, reachability-based
//! prediction and the metrics built on top of it.

pub mod abstraction;
pub mod cli;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod fpt;
pub mod learner;
pub mod pfa;
pub mod selection;
pub mod trace_model;

pub use error::{Error, Result};
