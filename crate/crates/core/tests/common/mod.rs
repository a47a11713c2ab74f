#![allow(dead_code)]

use std::collections::BTreeMap;

use pfa_extract::pfa::{Pfa, StateId, Transition};
use pfa_extract::trace_model::{LabelId, LabelTable, Symbol};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn label_names(n: usize) -> Vec<String> {
    ["N", "P", "Q", "R"][..n].iter().map(|s| s.to_string()).collect()
}

/// A random valid PFA with at most `max_states` states. Interior states get
/// random cluster edges, label edges and self-loops; some end up unable to
/// reach any label.
pub fn random_pfa(rng: &mut ChaCha8Rng, max_states: usize) -> Pfa {
    let n_labels = rng.random_range(2..=3usize);
    let labels = LabelTable::from_names(&label_names(n_labels)).unwrap();
    let k = rng.random_range(2..=5u32);
    let interior = rng.random_range(1..=max_states - n_labels);
    let n = interior + n_labels;
    let mut transitions = Vec::new();
    let mut self_loops = vec![1.0; n];
    for s in 0..interior {
        let mut edges: Vec<(Symbol, StateId, f64)> = Vec::new();
        for c in 0..k {
            if rng.random_bool(0.5) {
                edges.push((Symbol::Cluster(c), rng.random_range(0..interior), rng.random_range(0.05..1.0)));
            }
        }
        for l in 0..n_labels {
            if rng.random_bool(0.6) {
                edges.push((Symbol::Label(LabelId(l as u32)), interior + l, rng.random_range(0.05..1.0)));
            }
        }
        let loop_w = if rng.random_bool(0.4) { rng.random_range(0.0..0.5) } else { 0.0 };
        let total: f64 = edges.iter().map(|e| e.2).sum::<f64>() + loop_w;
        if edges.is_empty() {
            continue;
        }
        let mut out = 0.0;
        for (sym, to, w) in edges {
            let prob = w / total;
            out += prob;
            transitions.push(Transition { from: s, symbol: sym, to, prob });
        }
        self_loops[s] = (1.0 - out).max(0.0);
    }
    let accepting: BTreeMap<LabelId, StateId> = (0..n_labels).map(|l| (LabelId(l as u32), interior + l)).collect();
    let mut alphabet = vec![Symbol::Initial];
    alphabet.extend((0..k).map(Symbol::Cluster));
    alphabet.extend((0..n_labels as u32).map(|l| Symbol::Label(LabelId(l))));
    Pfa::validated(labels, alphabet, n, 0, accepting, transitions, self_loops).unwrap()
}

/// States from which some accepting state is reachable in the graph.
fn can_finish(p: &Pfa) -> Vec<bool> {
    let mut ok: Vec<bool> = (0..p.n_states()).map(|s| p.accepting_label(s).is_some()).collect();
    loop {
        let mut changed = false;
        for s in 0..p.n_states() {
            if !ok[s] && p.outgoing(s).iter().any(|t| t.prob > 0.0 && ok[t.to]) {
                ok[s] = true;
                changed = true;
            }
        }
        if !changed {
            return ok;
        }
    }
}

/// Fraction of `runs` random walks from `start` that end in each label's
/// accepting state.
pub fn monte_carlo(p: &Pfa, start: StateId, runs: usize, seed: u64) -> Vec<f64> {
    let finish = can_finish(p);
    let mut hits = vec![0usize; p.labels().len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..runs {
        let mut at = start;
        for _ in 0..1_000_000 {
            if let Some(l) = p.accepting_label(at) {
                hits[l.index()] += 1;
                break;
            }
            if !finish[at] {
                break;
            }
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for t in p.outgoing(at) {
                acc += t.prob;
                if u < acc {
                    at = t.to;
                    break;
                }
            }
        }
    }
    hits.iter().map(|&h| h as f64 / runs as f64).collect()
}
