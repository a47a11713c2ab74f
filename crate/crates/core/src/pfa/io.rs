//! `pfa/v1` JSON documents.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Pfa, Transition};
use crate::error::{Error, Result};
use crate::trace_model::{LabelTable, Symbol};

pub const PFA_FORMAT: &str = "pfa/v1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PfaFile {
    format: String,
    alphabet: Vec<String>,
    states: usize,
    initial: usize,
    accepting: BTreeMap<String, usize>,
    transitions: Vec<TransitionRecord>,
    self_loops: BTreeMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionRecord {
    from: usize,
    sym: String,
    to: usize,
    p: f64,
}

fn is_symbol_name(s: &str) -> bool {
    s == "s" || (s.len() > 1 && s.starts_with('c') && s[1..].bytes().all(|b| b.is_ascii_digit()))
}

/// Label names are the alphabet entries that are neither `s` nor `c<i>`;
/// they appear in label-id order.
pub fn write_pfa<W: Write>(p: &Pfa, mut out: W) -> Result<()> {
    let labels = p.labels();
    let mut alphabet: Vec<Symbol> = p.alphabet().to_vec();
    alphabet.extend(labels.ids().map(Symbol::Label));
    alphabet.sort();
    alphabet.dedup();
    let doc = PfaFile {
        format: PFA_FORMAT.into(),
        alphabet: alphabet.iter().map(|s| s.render(labels)).collect(),
        states: p.n_states(),
        initial: p.initial(),
        accepting: p.accepting().iter().map(|(&l, &s)| (labels.name(l).to_string(), s)).collect(),
        transitions: p
            .transitions()
            .iter()
            .map(|t| TransitionRecord { from: t.from, sym: t.symbol.render(labels), to: t.to, p: t.prob })
            .collect(),
        self_loops: p.self_loops().iter().enumerate().map(|(i, &v)| (i.to_string(), v)).collect(),
    };
    serde_json::to_writer(&mut out, &doc).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_pfa<R: Read>(input: R) -> Result<Pfa> {
    let doc: PfaFile =
        serde_json::from_reader(input).map_err(|e| Error::Format { line: e.line(), message: e.to_string() })?;
    let fmt_err = |message: String| Error::Format { line: 1, message };
    if doc.format != PFA_FORMAT {
        return Err(fmt_err(format!("unsupported format `{}`", doc.format)));
    }
    let names: Vec<&str> = doc.alphabet.iter().map(String::as_str).filter(|s| !is_symbol_name(s)).collect();
    let labels = LabelTable::from_names(&names).map_err(|e| fmt_err(e.to_string()))?;
    let parse = |s: &str| Symbol::parse(s, &labels).map_err(fmt_err);
    let alphabet = doc.alphabet.iter().map(|s| parse(s)).collect::<Result<Vec<_>>>()?;

    let mut accepting = BTreeMap::new();
    for (name, &s) in &doc.accepting {
        let l = labels.id_of(name).ok_or_else(|| Error::Reference(format!("accepting label `{name}` is not in the alphabet")))?;
        accepting.insert(l, s);
    }
    let transitions = doc
        .transitions
        .iter()
        .map(|t| Ok(Transition { from: t.from, symbol: parse(&t.sym)?, to: t.to, prob: t.p }))
        .collect::<Result<Vec<_>>>()?;
    let mut self_loops = vec![0.0; doc.states];
    let mut seen = vec![false; doc.states];
    for (k, &v) in &doc.self_loops {
        let s: usize = k.parse().map_err(|_| fmt_err(format!("bad self-loop key `{k}`")))?;
        if s >= doc.states {
            return Err(Error::Reference(format!("self-loop for undefined state {s}")));
        }
        self_loops[s] = v;
        seen[s] = true;
    }
    if let Some(s) = seen.iter().position(|x| !x) {
        return Err(fmt_err(format!("missing self-loop entry for state {s}")));
    }
    Pfa::validated(labels, alphabet, doc.states, doc.initial, accepting, transitions, self_loops)
}
