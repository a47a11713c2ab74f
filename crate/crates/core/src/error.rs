use std::io;

use thiserror::Error;

use crate::pfa::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("record `{record}`: hidden vector {index} has dimension {found}, expected {expected}")]
    Dimension {
        record: String,
        index: usize,
        found: usize,
        expected: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unknown label {0}")]
    UnknownLabel(String),

    #[error("invalid label table: {0}")]
    LabelTable(String),

    #[error("malformed trace `{id}`: {message}")]
    MalformedTrace { id: String, message: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("only {distinct} distinct points available, cannot fit {k} clusters")]
    TooFewPoints { distinct: usize, k: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("merge precondition violated: {0}")]
    Merge(String),

    #[error("PFA reference error: {0}")]
    Reference(String),

    #[error("invalid PFA: {}", join_violations(.0))]
    InvalidPfa(Vec<Violation>),

    #[error("traces are missing a gold label (first: `{0}`)")]
    MissingGold(String),

    #[error("invalid input string: {0}")]
    InvalidString(String),

    #[error("labels are unreachable from the initial state (reach mass {0})")]
    UnreachableLabels(f64),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
