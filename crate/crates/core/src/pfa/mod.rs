//! The extracted automaton and the queries run against it.
//!
//! A [`Pfa`] is symbol-deterministic: each `(state, symbol)` pair has at most
//! one successor. Whatever mass a state does not send along a symbol edge
//! stays on its residual self-loop. Accepting states, one per label, absorb.

mod io;
mod reach;

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::trace_model::{AbstractTrace, LabelId, LabelTable, Symbol};

pub use io::{read_pfa, write_pfa, PFA_FORMAT};
pub use reach::{LabelDistribution, ReachMethod, ReachTable};

pub type StateId = usize;

/// Tolerance on the per-state outgoing normalization.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub from: StateId,
    pub symbol: Symbol,
    pub to: StateId,
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pfa {
    labels: LabelTable,
    alphabet: Vec<Symbol>,
    n_states: usize,
    initial: StateId,
    accepting: BTreeMap<LabelId, StateId>,
    /// Sorted by `(from, symbol)`; `offsets[s]..offsets[s + 1]` is state `s`.
    transitions: Vec<Transition>,
    offsets: Vec<usize>,
    self_loops: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    ProbabilityRange,
    Normalization,
    Nondeterminism,
    AcceptingNotAbsorbing,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub state: StateId,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "state {}: {:?}: {}", self.state, self.kind, self.detail)
    }
}

impl Pfa {
    /// Assembles a PFA, checking only that every state id and label
    /// reference resolves. Probabilistic invariants are left to
    /// [`Pfa::validate`].
    pub fn new(
        labels: LabelTable,
        alphabet: Vec<Symbol>,
        n_states: usize,
        initial: StateId,
        accepting: BTreeMap<LabelId, StateId>,
        mut transitions: Vec<Transition>,
        self_loops: Vec<f64>,
    ) -> Result<Pfa> {
        if initial >= n_states {
            return Err(Error::Reference(format!("initial state {initial} out of range (states: {n_states})")));
        }
        if self_loops.len() != n_states {
            return Err(Error::Reference(format!("{} self-loop entries for {n_states} states", self_loops.len())));
        }
        for (&l, &s) in &accepting {
            if !labels.contains(l) {
                return Err(Error::Reference(format!("accepting state for unknown label {}", l.0)));
            }
            if s >= n_states {
                return Err(Error::Reference(format!("accepting state {s} out of range")));
            }
        }
        for t in &transitions {
            if t.from >= n_states || t.to >= n_states {
                return Err(Error::Reference(format!("transition {} -> {} references an undefined state", t.from, t.to)));
            }
            if let Symbol::Label(l) = t.symbol {
                if !labels.contains(l) {
                    return Err(Error::Reference(format!("transition on unknown label {}", l.0)));
                }
            }
        }
        transitions.sort_by_key(|t| (t.from, t.symbol));
        let mut offsets = vec![0; n_states + 1];
        for t in &transitions {
            offsets[t.from + 1] += 1;
        }
        for s in 0..n_states {
            offsets[s + 1] += offsets[s];
        }
        let mut alphabet = alphabet;
        alphabet.sort();
        alphabet.dedup();
        Ok(Pfa { labels, alphabet, n_states, initial, accepting, transitions, offsets, self_loops })
    }

    /// [`Pfa::new`] followed by [`Pfa::validate`].
    pub fn validated(
        labels: LabelTable,
        alphabet: Vec<Symbol>,
        n_states: usize,
        initial: StateId,
        accepting: BTreeMap<LabelId, StateId>,
        transitions: Vec<Transition>,
        self_loops: Vec<f64>,
    ) -> Result<Pfa> {
        let p = Pfa::new(labels, alphabet, n_states, initial, accepting, transitions, self_loops)?;
        let v = p.validate();
        if v.is_empty() {
            Ok(p)
        } else {
            Err(Error::InvalidPfa(v))
        }
    }

    pub fn labels(&self) -> &LabelTable {
        &self.labels
    }

    pub fn alphabet(&self) -> &[Symbol] {
        &self.alphabet
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn accepting(&self) -> &BTreeMap<LabelId, StateId> {
        &self.accepting
    }

    pub fn accepting_label(&self, s: StateId) -> Option<LabelId> {
        self.accepting.iter().find(|(_, &q)| q == s).map(|(&l, _)| l)
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn outgoing(&self, s: StateId) -> &[Transition] {
        &self.transitions[self.offsets[s]..self.offsets[s + 1]]
    }

    pub fn self_loop(&self, s: StateId) -> f64 {
        self.self_loops[s]
    }

    pub fn self_loops(&self) -> &[f64] {
        &self.self_loops
    }

    /// Successor of `s` on `sym`, if any.
    pub fn step(&self, s: StateId, sym: Symbol) -> Option<StateId> {
        let out = self.outgoing(s);
        out.binary_search_by(|t| t.symbol.cmp(&sym)).ok().map(|i| out[i].to)
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let bad = |p: f64| !(0.0..=1.0).contains(&p);
        for s in 0..self.n_states {
            let out = self.outgoing(s);
            for t in out {
                if bad(t.prob) {
                    v.push(Violation {
                        state: s,
                        kind: ViolationKind::ProbabilityRange,
                        detail: format!("transition on {} has probability {}", t.symbol, t.prob),
                    });
                }
            }
            if bad(self.self_loops[s]) {
                v.push(Violation {
                    state: s,
                    kind: ViolationKind::ProbabilityRange,
                    detail: format!("self-loop probability {}", self.self_loops[s]),
                });
            }
            for w in out.windows(2) {
                if w[0].symbol == w[1].symbol {
                    v.push(Violation {
                        state: s,
                        kind: ViolationKind::Nondeterminism,
                        detail: format!("two transitions on {}", w[0].symbol),
                    });
                }
            }
            let total: f64 = self.self_loops[s] + out.iter().map(|t| t.prob).sum::<f64>();
            if total.is_nan() || (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
                v.push(Violation {
                    state: s,
                    kind: ViolationKind::Normalization,
                    detail: format!("outgoing mass sums to {total}"),
                });
            }
        }
        for (&l, &s) in &self.accepting {
            if !self.outgoing(s).is_empty() {
                v.push(Violation {
                    state: s,
                    kind: ViolationKind::AcceptingNotAbsorbing,
                    detail: format!("accepting state of label {} has symbol transitions", self.labels.name(l)),
                });
            }
        }
        v
    }

    /// Walks `symbols` from `start`. A letter without a transition leaves
    /// the walk where it is and counts as a miss. A leading initial symbol
    /// is consumed by the start state.
    pub fn simulate_from(&self, start: StateId, symbols: &[Symbol]) -> Result<(StateId, usize)> {
        let mut at = start;
        let mut misses = 0;
        for (i, &sym) in symbols.iter().enumerate() {
            match sym {
                Symbol::Initial if i == 0 => continue,
                Symbol::Initial => return Err(Error::InvalidString("initial symbol inside a simulated sequence".into())),
                Symbol::Label(_) => return Err(Error::InvalidString("label symbol in a simulated sequence".into())),
                Symbol::Cluster(_) => match self.step(at, sym) {
                    Some(next) => at = next,
                    None => misses += 1,
                },
            }
        }
        Ok((at, misses))
    }

    pub fn simulate(&self, symbols: &[Symbol]) -> Result<(StateId, usize)> {
        self.simulate_from(self.initial, symbols)
    }

    /// Per-state successor distribution of the symbol-free Markov chain
    /// (probabilities summed per target, self-loops included). Accepting
    /// states are made absorbing.
    pub fn chain_rows(&self) -> Vec<Vec<(StateId, f64)>> {
        (0..self.n_states)
            .map(|s| {
                if self.accepting_label(s).is_some() {
                    return vec![(s, 1.0)];
                }
                let mut row: BTreeMap<StateId, f64> = BTreeMap::new();
                if self.self_loops[s] > 0.0 {
                    row.insert(s, self.self_loops[s]);
                }
                for t in self.outgoing(s) {
                    *row.entry(t.to).or_insert(0.0) += t.prob;
                }
                row.into_iter().filter(|&(_, p)| p > 0.0).collect()
            })
            .collect()
    }

    /// Probability of eventually reaching each label's accepting state from
    /// `from`.
    pub fn reach_probs(&self, from: StateId, tolerance: f64) -> LabelDistribution {
        ReachTable::compute(self, ReachMethod::Linear { fallback_tolerance: tolerance }).get(from).clone()
    }

    pub fn predictor(&self) -> Predictor<'_> {
        Predictor::new(self)
    }

    /// Graphviz rendering: accepting states as double circles, an entry
    /// arrow into the initial state, edges labelled `p/e`.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph pfa {\n  rankdir=LR;\n  __start [shape=point];\n");
        let _ = writeln!(out, "  __start -> q{};", self.initial);
        for s in 0..self.n_states {
            match self.accepting_label(s) {
                Some(l) => {
                    let _ = writeln!(out, "  q{s} [shape=doublecircle, label=\"{s} ({})\"];", self.labels.name(l));
                }
                None => {
                    let _ = writeln!(out, "  q{s} [shape=circle, label=\"{s}\"];");
                }
            }
        }
        for t in &self.transitions {
            let _ = writeln!(
                out,
                "  q{} -> q{} [label=\"{:.4}/{}\"];",
                t.from,
                t.to,
                t.prob,
                t.symbol.render(&self.labels)
            );
        }
        for s in 0..self.n_states {
            if self.accepting_label(s).is_none() && self.self_loops[s] > 0.0 {
                let _ = writeln!(out, "  q{s} -> q{s} [label=\"{:.4}/ε\"];", self.self_loops[s]);
            }
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub label: LabelId,
    pub distribution: LabelDistribution,
    pub final_state: StateId,
    pub misses: usize,
    /// Number of simulated cluster symbols.
    pub steps: usize,
}

/// A PFA with its reachability table precomputed, for batch prediction.
#[derive(Clone, Debug)]
pub struct Predictor<'a> {
    pfa: &'a Pfa,
    table: ReachTable,
}

impl<'a> Predictor<'a> {
    pub fn new(pfa: &'a Pfa) -> Self {
        Self::with_method(pfa, ReachMethod::default())
    }

    pub fn with_method(pfa: &'a Pfa, method: ReachMethod) -> Self {
        Predictor { pfa, table: ReachTable::compute(pfa, method) }
    }

    pub fn pfa(&self) -> &Pfa {
        self.pfa
    }

    pub fn table(&self) -> &ReachTable {
        &self.table
    }

    /// Strips the terminal label, simulates the rest and reports the most
    /// likely label (ties to the lowest id) with the full distribution.
    pub fn predict(&self, t: &AbstractTrace) -> Result<Prediction> {
        let body = match t.symbols.last() {
            Some(Symbol::Label(_)) => &t.symbols[..t.symbols.len() - 1],
            _ => &t.symbols[..],
        };
        let (final_state, misses) = self.pfa.simulate(body)?;
        let distribution = self.table.get(final_state).clone();
        let steps = body.iter().filter(|s| matches!(s, Symbol::Cluster(_))).count();
        Ok(Prediction { label: distribution.argmax(), distribution, final_state, misses, steps })
    }
}

/// One-shot prediction; prefer [`Predictor`] for batches.
pub fn predict(p: &Pfa, t: &AbstractTrace, tolerance: f64) -> Result<(LabelId, LabelDistribution)> {
    let pr = Predictor::with_method(p, ReachMethod::Linear { fallback_tolerance: tolerance }).predict(t)?;
    Ok((pr.label, pr.distribution))
}
