//! Synthetic datasets: Tomita grammars, balanced parentheses and traces
//! sampled from a known stochastic automaton.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::Serialize;

use crate::error::{Error, Result};

mod bp;
mod tomita;
mod truth;

pub use bp::{bp_label, gen_bp, BP_MAX_DEPTH};
pub use tomita::{gen_tomita, tomita_label, TOMITA_TEST_LENGTHS, TOMITA_TRAIN_LENGTHS};
pub use truth::{reference_truth, sample_dpfa, synthesize_hidden, GroundTruthDpfa, LabelSource, SampleConfig};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledString {
    pub text: String,
    pub label: bool,
}

/// Positive and negative counts per string length.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Balance {
    pub per_length: BTreeMap<usize, (usize, usize)>,
}

impl Balance {
    pub fn of(strings: &[LabeledString]) -> Balance {
        let mut per_length = BTreeMap::new();
        for s in strings {
            let e: &mut (usize, usize) = per_length.entry(s.text.chars().count()).or_default();
            if s.label {
                e.0 += 1;
            } else {
                e.1 += 1;
            }
        }
        Balance { per_length }
    }

    pub fn positives(&self) -> usize {
        self.per_length.values().map(|c| c.0).sum()
    }

    pub fn negatives(&self) -> usize {
        self.per_length.values().map(|c| c.1).sum()
    }

    /// Lengths whose positive and negative counts differ.
    pub fn unbalanced(&self) -> Vec<usize> {
        self.per_length.iter().filter(|(_, c)| c.0 != c.1).map(|(&l, _)| l).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub strings: Vec<LabeledString>,
    pub balance: Balance,
}

impl Dataset {
    fn new(strings: Vec<LabeledString>) -> Dataset {
        let balance = Balance::of(&strings);
        Dataset { strings, balance }
    }
}

/// One `text<TAB>label` line per string, label `1` or `0`.
pub fn write_labeled<W: Write>(strings: &[LabeledString], mut out: W) -> Result<()> {
    for s in strings {
        writeln!(out, "{}\t{}", s.text, u8::from(s.label))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_labeled<R: BufRead>(input: R) -> Result<Vec<LabeledString>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let Some((text, label)) = line.split_once('\t') else {
            return Err(Error::Format { line: i + 1, message: "expected `text<TAB>label`".into() });
        };
        let label = match label {
            "1" => true,
            "0" => false,
            other => return Err(Error::Format { line: i + 1, message: format!("label must be 0 or 1, got `{other}`") }),
        };
        out.push(LabeledString { text: text.to_string(), label });
    }
    Ok(out)
}
