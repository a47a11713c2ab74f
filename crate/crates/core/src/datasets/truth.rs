use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::pfa::{Pfa, ReachMethod, ReachTable, StateId, Transition};
use crate::trace_model::{AbstractTrace, AbstractTraceSet, ConcreteTrace, ConcreteTraceSet, LabelId, LabelTable, Symbol};

/// A valid, symbol-deterministic PFA from which every state reaches some
/// label with probability one.
#[derive(Clone, Debug)]
pub struct GroundTruthDpfa(Pfa);

impl GroundTruthDpfa {
    pub fn new(pfa: Pfa) -> Result<Self> {
        let v = pfa.validate();
        if !v.is_empty() {
            return Err(Error::InvalidPfa(v));
        }
        let table = ReachTable::compute(&pfa, ReachMethod::default());
        let worst = table.rows().iter().map(|d| d.sum()).fold(1.0, f64::min);
        if worst < 1.0 - 1e-9 {
            return Err(Error::UnreachableLabels(worst));
        }
        Ok(GroundTruthDpfa(pfa))
    }

    pub fn pfa(&self) -> &Pfa {
        &self.0
    }

    pub fn into_pfa(self) -> Pfa {
        self.0
    }

    /// Number of cluster symbols the automaton reads.
    pub fn k(&self) -> usize {
        let from_alphabet = self.0.alphabet().iter().filter_map(|s| match s {
            Symbol::Cluster(c) => Some(*c as usize + 1),
            _ => None,
        });
        let from_edges = self.0.transitions().iter().filter_map(|t| match t.symbol {
            Symbol::Cluster(c) => Some(c as usize + 1),
            _ => None,
        });
        from_alphabet.chain(from_edges).max().unwrap_or(0)
    }
}

/// Which label a sampled trace carries as its classifier label.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LabelSource {
    /// The label the random walk terminated in.
    #[default]
    Walk,
    /// The automaton's most likely label after the trace's letters, i.e. a
    /// deterministic classifier.
    MostLikely,
}

#[derive(Clone, Debug)]
pub struct SampleConfig {
    pub n: usize,
    /// Walks with more cluster letters than this are thrown away.
    pub max_len: usize,
    pub seed: u64,
    pub labels: LabelSource,
    pub exec: Exec,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { n: 1000, max_len: 50, seed: 0, labels: LabelSource::Walk, exec: Exec::default() }
    }
}

const ATTEMPTS_PER_TRACE: usize = 10_000;
const STEPS_PER_WALK: usize = 1_000_000;

/// One walk: cluster letters emitted, the label reached, and the state
/// just before the label.
fn walk(p: &Pfa, max_len: usize, rng: &mut ChaCha8Rng) -> Option<(Vec<Symbol>, LabelId, StateId)> {
    let mut at = p.initial();
    let mut letters = Vec::new();
    for _ in 0..STEPS_PER_WALK {
        if let Some(l) = p.accepting_label(at) {
            return Some((letters, l, at));
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut next: Option<&Transition> = None;
        for t in p.outgoing(at) {
            acc += t.prob;
            if u < acc {
                next = Some(t);
                break;
            }
        }
        // falling past every edge means the self-loop fired: no letter
        let Some(t) = next else { continue };
        match t.symbol {
            Symbol::Label(l) => return Some((letters, l, at)),
            s => {
                letters.push(s);
                if letters.len() > max_len {
                    return None;
                }
                at = t.to;
            }
        }
    }
    None
}

/// Samples `cfg.n` traces by random walks. Trace `i` uses its own seeded
/// stream, so the set does not depend on the execution policy. The gold
/// label is always the automaton's most likely label for the trace.
pub fn sample_dpfa(truth: &GroundTruthDpfa, cfg: &SampleConfig) -> Result<AbstractTraceSet> {
    let p = truth.pfa();
    let table = ReachTable::compute(p, ReachMethod::default());
    let traces = cfg.exec.map_range(cfg.n, |i| -> Result<AbstractTrace> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64);
        for _ in 0..ATTEMPTS_PER_TRACE {
            let Some((letters, walked, before)) = walk(p, cfg.max_len, &mut rng) else { continue };
            let likely = table.get(before).argmax();
            let label = match cfg.labels {
                LabelSource::Walk => walked,
                LabelSource::MostLikely => likely,
            };
            let mut symbols = Vec::with_capacity(letters.len() + 2);
            symbols.push(Symbol::Initial);
            symbols.extend(letters);
            symbols.push(Symbol::Label(label));
            return Ok(AbstractTrace { id: format!("t{i}"), symbols, rnn_label: label, gold_label: Some(likely) });
        }
        Err(Error::Config(format!("no walk of at most {} letters after {ATTEMPTS_PER_TRACE} attempts", cfg.max_len)))
    });
    let traces = traces.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(AbstractTraceSet { labels: p.labels().clone(), k: truth.k(), traces })
}

/// Concrete traces whose hidden vectors sit within `noise` (per coordinate,
/// uniform) of `centers[c]` for each cluster letter `c`.
pub fn synthesize_hidden(ts: &AbstractTraceSet, centers: &[Vec<f64>], noise: f64, seed: u64) -> Result<ConcreteTraceSet> {
    let dim = centers.first().map_or(0, Vec::len);
    if dim == 0 || centers.iter().any(|c| c.len() != dim) {
        return Err(Error::Config("centers must be non-empty vectors of one dimension".into()));
    }
    let mut traces = Vec::with_capacity(ts.len());
    for (i, t) in ts.traces.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut hidden = Vec::new();
        for s in t.interior() {
            let Symbol::Cluster(c) = *s else { continue };
            let center = centers
                .get(c as usize)
                .ok_or_else(|| Error::Config(format!("no center for cluster {c}")))?;
            hidden.push(center.iter().map(|x| x + noise * (2.0 * rng.random::<f64>() - 1.0)).collect());
        }
        if hidden.is_empty() {
            return Err(Error::MalformedTrace { id: t.id.clone(), message: "no cluster letters to synthesize from".into() });
        }
        traces.push(ConcreteTrace { id: t.id.clone(), hidden, rnn_label: t.rnn_label, gold_label: t.gold_label });
    }
    Ok(ConcreteTraceSet { labels: ts.labels.clone(), dim, traces })
}

/// Four interior states over `c0..c2` with labels `N` and `P`. State `q1`
/// is entered only by `c0`, `q2` only by `c1` and `q3` only by `c2`;
/// accepting `P` is state 4 and `N` state 5.
pub fn reference_truth() -> GroundTruthDpfa {
    let labels = LabelTable::from_names(&["N", "P"]).expect("valid names");
    let (n, p) = (Symbol::Label(LabelId(0)), Symbol::Label(LabelId(1)));
    let c = Symbol::Cluster;
    type Row<'a> = (StateId, &'a [(Symbol, StateId, f64)]);
    let rows: [Row<'_>; 4] = [
        (0, &[(c(0), 1, 0.5), (c(1), 2, 0.3), (c(2), 3, 0.2)]),
        (1, &[(c(0), 1, 0.1), (c(1), 2, 0.15), (c(2), 3, 0.1), (p, 4, 0.65)]),
        (2, &[(c(0), 1, 0.1), (c(1), 2, 0.1), (c(2), 3, 0.1), (n, 5, 0.7)]),
        (3, &[(c(0), 1, 0.15), (c(1), 2, 0.2), (p, 4, 0.45), (n, 5, 0.2)]),
    ];
    let transitions = rows
        .iter()
        .flat_map(|(from, out)| out.iter().map(move |&(symbol, to, prob)| Transition { from: *from, symbol, to, prob }))
        .collect();
    let mut alphabet = vec![Symbol::Initial, c(0), c(1), c(2), n, p];
    alphabet.sort();
    let pfa = Pfa::validated(
        labels,
        alphabet,
        6,
        0,
        BTreeMap::from([(LabelId(0), 5), (LabelId(1), 4)]),
        transitions,
        vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0],
    )
    .expect("reference automaton is valid");
    GroundTruthDpfa::new(pfa).expect("reference automaton always terminates")
}
