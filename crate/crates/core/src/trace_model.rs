//! Trace and label types shared by every stage of the pipeline, plus the
//! line-delimited JSON files they are stored in.
//!
//! A concrete trace is the hidden-state sequence a recurrent classifier
//! produced for one input (the all-zero dummy start state is not stored).
//! An abstract trace is the same run written over the symbolic alphabet
//! `{s} ∪ clusters ∪ labels`: the initial symbol, one cluster symbol per
//! hidden state, then the classifier's label.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CONCRETE_FORMAT: &str = "concrete-trace/v1";
pub const ABSTRACT_FORMAT: &str = "abstract-trace/v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelId(pub u32);

impl LabelId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Label {
    pub id: LabelId,
    pub name: String,
}

/// Dense label table: ids are `0..len` and names are unique.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct LabelTable {
    labels: Vec<Label>,
    by_name: HashMap<String, LabelId>,
}

/// `s` and `c<digits>` are taken by the initial and cluster symbols.
fn reserved_name(name: &str) -> bool {
    name == "s" || (name.len() > 1 && name.starts_with('c') && name[1..].bytes().all(|b| b.is_ascii_digit()))
}

impl LabelTable {
    pub fn new(mut labels: Vec<Label>) -> Result<Self> {
        labels.sort_by_key(|l| l.id);
        let mut by_name = HashMap::new();
        for (i, l) in labels.iter().enumerate() {
            if l.id.index() != i {
                return Err(Error::LabelTable(format!("label ids must be dense from 0, found id {} at position {i}", l.id.0)));
            }
            if l.name.is_empty() {
                return Err(Error::LabelTable(format!("label {} has an empty name", l.id.0)));
            }
            if reserved_name(&l.name) {
                return Err(Error::LabelTable(format!("label name `{}` collides with a symbol name", l.name)));
            }
            if by_name.insert(l.name.clone(), l.id).is_some() {
                return Err(Error::LabelTable(format!("duplicate label name `{}`", l.name)));
            }
        }
        Ok(Self { labels, by_name })
    }

    /// Ids are assigned in the given order.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        Self::new(
            names
                .iter()
                .enumerate()
                .map(|(i, n)| Label { id: LabelId(i as u32), name: n.as_ref().to_string() })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, id: LabelId) -> Option<&Label> {
        self.labels.get(id.index())
    }

    pub fn name(&self, id: LabelId) -> &str {
        &self.labels[id.index()].name
    }

    pub fn id_of(&self, name: &str) -> Option<LabelId> {
        self.by_name.get(name).copied()
    }

    pub fn contains(&self, id: LabelId) -> bool {
        id.index() < self.labels.len()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn ids(&self) -> impl Iterator<Item = LabelId> + '_ {
        self.labels.iter().map(|l| l.id)
    }
}

/// A letter of the abstract alphabet. The derived order (initial, clusters
/// by index, labels by id) is the canonical symbol order used everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    Initial,
    Cluster(u32),
    Label(LabelId),
}

impl Symbol {
    pub fn is_label(self) -> bool {
        matches!(self, Symbol::Label(_))
    }

    pub fn render(self, labels: &LabelTable) -> String {
        match self {
            Symbol::Initial => "s".to_string(),
            Symbol::Cluster(i) => format!("c{i}"),
            Symbol::Label(id) => labels.get(id).map(|l| l.name.clone()).unwrap_or_else(|| format!("?{}", id.0)),
        }
    }

    pub fn parse(text: &str, labels: &LabelTable) -> std::result::Result<Symbol, String> {
        if text == "s" {
            return Ok(Symbol::Initial);
        }
        if reserved_name(text) {
            return text[1..].parse::<u32>().map(Symbol::Cluster).map_err(|e| format!("bad cluster symbol `{text}`: {e}"));
        }
        labels.id_of(text).map(Symbol::Label).ok_or_else(|| format!("unknown symbol `{text}`"))
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Initial => write!(f, "s"),
            Symbol::Cluster(i) => write!(f, "c{i}"),
            Symbol::Label(id) => write!(f, "#{}", id.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConcreteTrace {
    pub id: String,
    pub hidden: Vec<Vec<f64>>,
    pub rnn_label: LabelId,
    pub gold_label: Option<LabelId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbstractTrace {
    pub id: String,
    pub symbols: Vec<Symbol>,
    pub rnn_label: LabelId,
    pub gold_label: Option<LabelId>,
}

impl AbstractTrace {
    /// The cluster symbols between the initial symbol and the label.
    pub fn interior(&self) -> &[Symbol] {
        match self.symbols.len() {
            0 | 1 => &[],
            n => &self.symbols[1..n - 1],
        }
    }

    /// The trace without its leading initial symbol.
    pub fn stripped(&self) -> &[Symbol] {
        match self.symbols.first() {
            Some(Symbol::Initial) => &self.symbols[1..],
            _ => &self.symbols,
        }
    }

    /// Checks the abstract-trace grammar: initial first, interior clusters
    /// below `k`, and exactly one terminal label equal to `rnn_label`.
    pub fn check(&self, k: usize, labels: &LabelTable) -> std::result::Result<(), String> {
        if self.symbols.len() < 2 {
            return Err("trace needs at least the initial symbol and a label".into());
        }
        if self.symbols[0] != Symbol::Initial {
            return Err("first symbol is not the initial symbol `s`".into());
        }
        match *self.symbols.last().unwrap() {
            Symbol::Label(l) if l == self.rnn_label => {}
            Symbol::Label(_) => return Err("terminal label differs from rnn_label".into()),
            _ => return Err("trace does not end with a label symbol".into()),
        }
        for s in self.interior() {
            match *s {
                Symbol::Cluster(i) if (i as usize) < k => {}
                Symbol::Cluster(i) => return Err(format!("cluster c{i} out of range for k={k}")),
                Symbol::Initial => return Err("initial symbol inside the trace".into()),
                Symbol::Label(_) => return Err("label symbol before the end of the trace".into()),
            }
        }
        if !labels.contains(self.rnn_label) {
            return Err(format!("unknown rnn_label {}", self.rnn_label.0));
        }
        if let Some(g) = self.gold_label {
            if !labels.contains(g) {
                return Err(format!("unknown gold_label {}", g.0));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConcreteTraceSet {
    pub labels: LabelTable,
    pub dim: usize,
    pub traces: Vec<ConcreteTrace>,
}

impl ConcreteTraceSet {
    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbstractTraceSet {
    pub labels: LabelTable,
    pub k: usize,
    pub traces: Vec<AbstractTrace>,
}

impl AbstractTraceSet {
    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.traces {
            t.check(self.k, &self.labels)
                .map_err(|message| Error::MalformedTrace { id: t.id.clone(), message })?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConcreteHeader {
    format: String,
    dim: usize,
    labels: Vec<Label>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConcreteRecord {
    id: String,
    rnn_label: u32,
    #[serde(default)]
    gold_label: Option<u32>,
    hidden: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AbstractHeader {
    format: String,
    k: usize,
    labels: Vec<Label>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AbstractRecord {
    id: String,
    rnn_label: u32,
    #[serde(default)]
    gold_label: Option<u32>,
    symbols: Vec<String>,
}

/// Non-blank lines with their 1-based line numbers.
fn records<R: BufRead>(input: R) -> impl Iterator<Item = Result<(usize, String)>> {
    input
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)).map_err(Error::from))
        .filter(|r| !matches!(r, Ok((_, l)) if l.trim().is_empty()))
}

fn parse_line<T: for<'de> Deserialize<'de>>(line_no: usize, line: &str) -> Result<T> {
    serde_json::from_str(line).map_err(|e| Error::Format { line: line_no, message: e.to_string() })
}

fn label_ref(labels: &LabelTable, raw: u32, line: usize, what: &str) -> Result<LabelId> {
    let id = LabelId(raw);
    if labels.contains(id) {
        Ok(id)
    } else {
        Err(Error::Format { line, message: format!("unknown {what} id {raw}") })
    }
}

fn header_labels(labels: Vec<Label>, line: usize) -> Result<LabelTable> {
    LabelTable::new(labels).map_err(|e| Error::Format { line, message: e.to_string() })
}

pub fn read_concrete_traces<R: BufRead>(input: R) -> Result<ConcreteTraceSet> {
    let mut lines = records(input);
    let (hline, header) = lines
        .next()
        .transpose()?
        .ok_or(Error::Format { line: 1, message: "missing header record".into() })?;
    let header: ConcreteHeader = parse_line(hline, &header)?;
    if header.format != CONCRETE_FORMAT {
        return Err(Error::Format { line: hline, message: format!("unsupported format `{}`", header.format) });
    }
    if header.dim == 0 {
        return Err(Error::Format { line: hline, message: "dim must be at least 1".into() });
    }
    let labels = header_labels(header.labels, hline)?;
    let mut traces = Vec::new();
    for item in lines {
        let (line, text) = item?;
        let rec: ConcreteRecord = parse_line(line, &text)?;
        if rec.hidden.is_empty() {
            return Err(Error::Format { line, message: format!("record `{}` has no hidden vectors", rec.id) });
        }
        if let Some((index, v)) = rec.hidden.iter().enumerate().find(|(_, v)| v.len() != header.dim) {
            return Err(Error::Dimension { record: rec.id, index, found: v.len(), expected: header.dim });
        }
        traces.push(ConcreteTrace {
            rnn_label: label_ref(&labels, rec.rnn_label, line, "rnn_label")?,
            gold_label: rec.gold_label.map(|g| label_ref(&labels, g, line, "gold_label")).transpose()?,
            id: rec.id,
            hidden: rec.hidden,
        });
    }
    Ok(ConcreteTraceSet { labels, dim: header.dim, traces })
}

/// Refuses sets the reader would reject: empty hidden sequences or vectors
/// of the wrong dimension.
pub fn write_concrete_traces<W: Write>(set: &ConcreteTraceSet, mut out: W) -> Result<()> {
    if set.dim == 0 {
        return Err(Error::Config("dim must be at least 1".into()));
    }
    for t in &set.traces {
        if t.hidden.is_empty() {
            return Err(Error::MalformedTrace { id: t.id.clone(), message: "no hidden vectors".into() });
        }
        if let Some((index, v)) = t.hidden.iter().enumerate().find(|(_, v)| v.len() != set.dim) {
            return Err(Error::Dimension { record: t.id.clone(), index, found: v.len(), expected: set.dim });
        }
    }
    let header = ConcreteHeader { format: CONCRETE_FORMAT.into(), dim: set.dim, labels: set.labels.labels().to_vec() };
    serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    for t in &set.traces {
        let rec = ConcreteRecord {
            id: t.id.clone(),
            rnn_label: t.rnn_label.0,
            gold_label: t.gold_label.map(|g| g.0),
            hidden: t.hidden.clone(),
        };
        serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_abstract_traces<R: BufRead>(input: R) -> Result<AbstractTraceSet> {
    let mut lines = records(input);
    let (hline, header) = lines
        .next()
        .transpose()?
        .ok_or(Error::Format { line: 1, message: "missing header record".into() })?;
    let header: AbstractHeader = parse_line(hline, &header)?;
    if header.format != ABSTRACT_FORMAT {
        return Err(Error::Format { line: hline, message: format!("unsupported format `{}`", header.format) });
    }
    let labels = header_labels(header.labels, hline)?;
    let mut traces = Vec::new();
    for item in lines {
        let (line, text) = item?;
        let rec: AbstractRecord = parse_line(line, &text)?;
        let symbols = rec
            .symbols
            .iter()
            .map(|s| Symbol::parse(s, &labels))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|message| Error::Format { line, message })?;
        let trace = AbstractTrace {
            rnn_label: label_ref(&labels, rec.rnn_label, line, "rnn_label")?,
            gold_label: rec.gold_label.map(|g| label_ref(&labels, g, line, "gold_label")).transpose()?,
            id: rec.id,
            symbols,
        };
        trace
            .check(header.k, &labels)
            .map_err(|m| Error::Format { line, message: format!("trace `{}`: {m}", trace.id) })?;
        traces.push(trace);
    }
    Ok(AbstractTraceSet { labels, k: header.k, traces })
}

pub fn write_abstract_traces<W: Write>(set: &AbstractTraceSet, mut out: W) -> Result<()> {
    let header = AbstractHeader { format: ABSTRACT_FORMAT.into(), k: set.k, labels: set.labels.labels().to_vec() };
    serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    for t in &set.traces {
        let rec = AbstractRecord {
            id: t.id.clone(),
            rnn_label: t.rnn_label.0,
            gold_label: t.gold_label.map(|g| g.0),
            symbols: t.symbols.iter().map(|s| s.render(&set.labels)).collect(),
        };
        serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
