//! Red/blue state merging over the frequency prefix tree.
//!
//! Blue nodes are taken in breadth-first order `(depth, symbol, id)`. Each
//! one is tested against the red nodes in promotion order and folded into the
//! first compatible one; otherwise it turns red and its children join the
//! blue frontier. Compatibility requires the same incoming symbol and, for
//! every continuation, path probabilities that differ by less than the
//! Hoeffding-style bound `√(6ε ln F₁ / F₁) + √(6ε ln F₂ / F₂)`.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::fpt::{build_fpt, Edge, Fpt, NodeId};
use crate::pfa::{Pfa, StateId, Transition};
use crate::trace_model::{AbstractTraceSet, LabelTable, Symbol};

/// How a fold updates counts above the red node.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MergeRule {
    /// Counts are added only to `r`, its folded descendants and the
    /// redirected edge; every node keeps `F = terminal + Σ E`.
    #[default]
    FlowConserving,
    /// Additionally adds `F(b)` to every tree ancestor of `r` and to the tree
    /// edges on that path.
    AncestorPropagating,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BlueOrder {
    /// `(depth, symbol, node id)` ascending.
    #[default]
    BreadthFirst,
}

#[derive(Clone, Debug)]
pub struct LearnerConfig {
    pub epsilon: f64,
    pub max_compat_depth: Option<usize>,
    pub blue_order: BlueOrder,
    pub merge_rule: MergeRule,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self { epsilon: 64.0, max_compat_depth: None, blue_order: BlueOrder::BreadthFirst, merge_rule: MergeRule::default() }
    }
}

impl LearnerConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self { epsilon, ..Self::default() }
    }
}

/// Right-hand side of the compatibility test (natural log).
pub fn hoeffding_bound(f1: u64, f2: u64, epsilon: f64) -> Result<f64> {
    if f1 == 0 || f2 == 0 {
        return Err(Error::Config("hoeffding bound needs positive frequencies".into()));
    }
    let term = |f: u64| {
        let f = f as f64;
        (6.0 * epsilon * f.ln() / f).sqrt()
    };
    Ok(term(f1) + term(f2))
}

/// A difference passes when it is strictly below the bound, or exactly zero
/// (so nodes seen once still merge on identical futures).
fn within(diff: f64, bound: f64) -> bool {
    diff == 0.0 || diff < bound
}

/// Synchronized walk over both futures. Paths missing on one side count
/// with probability 0; termination at a node is compared as its own event.
pub fn compatible(f: &Fpt, n1: NodeId, n2: NodeId, cfg: &LearnerConfig) -> bool {
    let (a, b) = (f.node(n1), f.node(n2));
    if a.symbol != b.symbol || a.freq == 0 || b.freq == 0 {
        return false;
    }
    if n1 == n2 {
        return true;
    }
    let bound = match hoeffding_bound(a.freq, b.freq, cfg.epsilon) {
        Ok(b) => b,
        Err(_) => return false,
    };
    // (node, path probability) on each side, plus depth
    let mut stack = vec![(n1, 1.0f64, n2, 1.0f64, 0usize)];
    while let Some((x, px, y, py, depth)) = stack.pop() {
        if x == y && px == py {
            continue;
        }
        if cfg.max_compat_depth.is_some_and(|d| depth >= d) {
            continue;
        }
        let tx = px * f.terminal_prob(x);
        let ty = py * f.terminal_prob(y);
        if !within((tx - ty).abs(), bound) {
            return false;
        }
        let (nx, ny) = (f.node(x), f.node(y));
        let symbols: BTreeSet<Symbol> = nx.children.keys().chain(ny.children.keys()).copied().collect();
        for s in symbols {
            let qx = px * f.one_step_prob(x, s);
            let qy = py * f.one_step_prob(y, s);
            if !within((qx - qy).abs(), bound) {
                return false;
            }
            // deeper path probabilities never exceed these, so below the
            // bound on both sides (or absent on one) nothing can fail
            if qx < bound && qy < bound {
                continue;
            }
            if let (Some(cx), Some(cy)) = (f.child(x, s), f.child(y, s)) {
                stack.push((cx, qx, cy, qy, depth + 1));
            }
        }
    }
    true
}

/// Folds blue node `b` into red node `r`. Returns the nodes under red nodes
/// that were grafted from `b`'s subtree, which the caller must treat as new
/// frontier candidates when their new parent is red.
pub fn merge(f: &mut Fpt, r: NodeId, b: NodeId, rule: MergeRule) -> Result<Vec<(NodeId, NodeId)>> {
    if r == b {
        return Err(Error::Merge("cannot merge a node into itself".into()));
    }
    if r >= f.arena_len() || b >= f.arena_len() {
        return Err(Error::Merge("node id out of range".into()));
    }
    if !f.node(r).alive || !f.node(b).alive {
        return Err(Error::Merge(format!("node {} is no longer live", if f.node(r).alive { b } else { r })));
    }
    let (parent, sym) = match (f.node(b).parent, f.node(b).symbol) {
        (Some(p), Some(s)) => (p, s),
        _ => return Err(Error::Merge("the blue node must have a tree parent".into())),
    };
    if f.node(r).symbol != Some(sym) {
        return Err(Error::Merge("nodes disagree on their incoming symbol".into()));
    }
    match f.node(parent).children.get(&sym) {
        Some(e) if e.target == b => {}
        _ => return Err(Error::Merge("the blue node is not its parent's child".into())),
    }
    let fb = f.freq(b);

    f.node_mut(parent).children.get_mut(&sym).expect("checked above").target = r;

    if rule == MergeRule::AncestorPropagating {
        let mut at = r;
        while let Some(pa) = f.node(at).parent {
            let s = f.node(at).symbol.expect("non-root has a symbol");
            let pn = f.node_mut(pa);
            pn.freq += fb;
            let e = pn.children.get_mut(&s).expect("tree edge to a red node is never redirected");
            debug_assert_eq!(e.target, at);
            e.count += fb;
            at = pa;
        }
    }

    let mut grafted = Vec::new();
    let mut stack = vec![(r, b)];
    while let Some((into, from)) = stack.pop() {
        let (ffreq, fterm) = (f.node(from).freq, f.node(from).terminal);
        let children: Vec<(Symbol, Edge)> = f.node(from).children.iter().map(|(&s, &e)| (s, e)).collect();
        {
            let n = f.node_mut(into);
            n.freq += ffreq;
            n.terminal += fterm;
        }
        f.node_mut(from).alive = false;
        for (s, e) in children {
            match f.node(into).children.get(&s).copied() {
                Some(existing) => {
                    f.node_mut(into).children.get_mut(&s).unwrap().count += e.count;
                    stack.push((existing.target, e.target));
                }
                None => {
                    f.node_mut(into).children.insert(s, e);
                    f.node_mut(e.target).parent = Some(into);
                    grafted.push((into, e.target));
                }
            }
        }
        debug_assert!(out_mass_ok(f, into), "outgoing mass exceeds 1 at node {into}");
    }
    Ok(grafted)
}

fn out_mass_ok(f: &Fpt, n: NodeId) -> bool {
    let node = f.node(n);
    node.children.values().map(|e| e.count).sum::<u64>() <= node.freq
}

/// Outcome of the red/blue loop, kept for inspection and tests.
#[derive(Clone, Debug)]
pub struct Learned {
    pub fpt: Fpt,
    /// Red nodes in promotion order; state `i` of the PFA is `red[i]`.
    pub red: Vec<NodeId>,
    pub merges: usize,
    pub pfa: Pfa,
}

pub fn extract_pfa(ts: &AbstractTraceSet, cfg: &LearnerConfig) -> Result<Pfa> {
    learn(ts, cfg).map(|l| l.pfa)
}

pub fn learn(ts: &AbstractTraceSet, cfg: &LearnerConfig) -> Result<Learned> {
    if cfg.epsilon.is_nan() || cfg.epsilon <= 0.0 {
        return Err(Error::Config("epsilon must be positive".into()));
    }
    let fpt = build_fpt(ts)?;
    learn_tree(fpt, &ts.labels, ts.k, cfg)
}

pub(crate) fn learn_tree(mut fpt: Fpt, labels: &LabelTable, k: usize, cfg: &LearnerConfig) -> Result<Learned> {
    let key = |f: &Fpt, n: NodeId| {
        let node = f.node(n);
        (node.depth, node.symbol, n)
    };
    let mut red: Vec<NodeId> = Vec::new();
    let mut is_red = vec![false; fpt.arena_len()];
    let mut blue: BTreeSet<(usize, Option<Symbol>, NodeId)> = BTreeSet::new();
    blue.insert(key(&fpt, fpt.root()));
    let mut merges = 0;

    while let Some(entry) = blue.pop_first() {
        let b = entry.2;
        if !fpt.node(b).alive || is_red[b] {
            continue;
        }
        let target = red.iter().copied().find(|&r| compatible(&fpt, r, b, cfg));
        match target {
            Some(r) => {
                let grafted = merge(&mut fpt, r, b, cfg.merge_rule)?;
                merges += 1;
                for (parent, child) in grafted {
                    if is_red[parent] {
                        blue.insert(key(&fpt, child));
                    }
                }
            }
            None => {
                is_red[b] = true;
                red.push(b);
                for e in fpt.node(b).children.values() {
                    if !is_red[e.target] {
                        blue.insert(key(&fpt, e.target));
                    }
                }
            }
        }
    }

    let pfa = to_pfa(&fpt, &red, &is_red, labels, k)?;
    Ok(Learned { fpt, red, merges, pfa })
}

fn to_pfa(f: &Fpt, red: &[NodeId], is_red: &[bool], labels: &LabelTable, k: usize) -> Result<Pfa> {
    let mut state_of: BTreeMap<NodeId, StateId> = BTreeMap::new();
    for (i, &n) in red.iter().enumerate() {
        state_of.insert(n, i);
    }
    let mut transitions = Vec::new();
    let mut self_loops = Vec::with_capacity(red.len());
    let mut accepting = BTreeMap::new();
    for (i, &n) in red.iter().enumerate() {
        let node = f.node(n);
        if let Some(Symbol::Label(l)) = node.symbol {
            if accepting.insert(l, i).is_some() {
                return Err(Error::Merge(format!("label {} ended up with two accepting states", labels.name(l))));
            }
        }
        let mut out = 0.0;
        for (&s, e) in &node.children {
            debug_assert!(is_red[e.target], "frontier left non-empty");
            let to = *state_of
                .get(&e.target)
                .ok_or_else(|| Error::Merge(format!("edge from {n} leads to non-red node {}", e.target)))?;
            let prob = e.count as f64 / node.freq as f64;
            out += prob;
            transitions.push(Transition { from: i, symbol: s, to, prob });
        }
        self_loops.push((1.0 - out).clamp(0.0, 1.0));
    }
    let mut alphabet = vec![Symbol::Initial];
    alphabet.extend((0..k as u32).map(Symbol::Cluster));
    alphabet.extend(labels.ids().map(Symbol::Label));
    alphabet.extend(f.alphabet().iter().copied());
    Pfa::new(labels.clone(), alphabet, red.len(), 0, accepting, transitions, self_loops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fpt::tests::{worked_tree, A, B};
    use crate::trace_model::{AbstractTrace, LabelId};

    #[test]
    fn bound_values() {
        assert_eq!(hoeffding_bound(1, 1, 64.0).unwrap(), 0.0);
        let expected = 2.0 * (384.0 * 100f64.ln() / 100.0).sqrt();
        assert!((hoeffding_bound(100, 100, 64.0).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 8.4104).abs() < 1e-3);
        assert!(hoeffding_bound(10, 10, 64.0).unwrap() > hoeffding_bound(10_000, 10_000, 64.0).unwrap());
        let big = hoeffding_bound(1_000_000, 1_000_000, 64.0).unwrap();
        assert!((big - 0.1457).abs() < 1e-3);
        assert!(hoeffding_bound(0, 3, 64.0).is_err());
    }

    #[test]
    fn worked_compatibility() {
        let t = worked_tree();
        let cfg = LearnerConfig::default();
        let aa = t.find(&[A, A]).unwrap();
        let aba = t.find(&[A, B, A]).unwrap();
        assert!(compatible(&t, aa, aa, &cfg));
        assert!(compatible(&t, aa, aba, &cfg));
        let ab = t.find(&[A, B]).unwrap();
        assert!(!compatible(&t, aa, ab, &cfg)); // different last symbol
        assert!(!compatible(&t, t.root(), t.find(&[A]).unwrap(), &cfg));
    }

    #[test]
    fn large_counts_separate_different_futures() {
        let m = 1_000_000;
        // node x: 75% a / 25% b; node y: 25% a / 75% b; both reached via a
        let t = Fpt::from_sequences([
            (&[A, A][..], 3 * m / 4),
            (&[A, B][..], m / 4),
            (&[B, A, A][..], m / 4),
            (&[B, A, B][..], 3 * m / 4),
        ])
        .unwrap();
        let x = t.find(&[A]).unwrap();
        let y = t.find(&[B, A]).unwrap();
        assert!(!compatible(&t, x, y, &LearnerConfig::default()));
    }

    #[test]
    fn worked_merge_with_ancestor_rule() {
        let mut t = worked_tree();
        let ab = t.find(&[A, B]).unwrap();
        let bb = t.find(&[B, B]).unwrap();
        let b = t.find(&[B]).unwrap();
        let aba = t.find(&[A, B, A]).unwrap();
        merge(&mut t, ab, bb, MergeRule::AncestorPropagating).unwrap();
        assert_eq!(t.freq(ab), 40);
        assert_eq!(t.freq(t.find(&[A]).unwrap()), 90);
        assert_eq!(t.freq(t.root()), 110);
        assert_eq!(t.freq(aba), 16);
        let abb = t.child(ab, B).unwrap();
        assert_eq!(t.freq(abb), 4);
        assert_eq!(t.node(b).children[&B], Edge { target: ab, count: 10 });
        assert!(!t.node(bb).alive);
        assert!(t.flow_violations().is_empty());
        assert!(merge(&mut t, ab, bb, MergeRule::AncestorPropagating).is_err());
    }

    #[test]
    fn worked_merge_flow_conserving() {
        let mut t = worked_tree();
        let ab = t.find(&[A, B]).unwrap();
        let bb = t.find(&[B, B]).unwrap();
        merge(&mut t, ab, bb, MergeRule::FlowConserving).unwrap();
        assert_eq!(t.freq(ab), 40);
        assert_eq!(t.freq(t.find(&[A]).unwrap()), 80);
        assert_eq!(t.freq(t.root()), 100);
        assert_eq!(t.freq(t.find(&[A, B, A]).unwrap()), 16);
        // a's out-edge to ab still carries 30 while ab now sees 40
        assert_eq!(t.one_step_prob(t.find(&[A]).unwrap(), B), 0.375);
        assert_eq!(t.flow_violations(), Vec::<NodeId>::new());
    }

    #[test]
    fn leaf_into_leaf_touches_only_edges_and_ancestors() {
        let mut t = worked_tree();
        let aa = t.find(&[A, A]).unwrap();
        let aba = t.find(&[A, B, A]).unwrap();
        merge(&mut t, aa, aba, MergeRule::AncestorPropagating).unwrap();
        assert_eq!(t.freq(aa), 60);
        assert_eq!(t.freq(t.find(&[A]).unwrap()), 90);
        assert_eq!(t.node(t.find(&[A, B]).unwrap()).children[&A].target, aa);
        assert_eq!(t.node(aa).children.len(), 0);
    }

    fn labels() -> LabelTable {
        LabelTable::from_names(&["N", "P"]).unwrap()
    }

    fn trace(body: &[Symbol], label: u32) -> AbstractTrace {
        let mut symbols = vec![Symbol::Initial];
        symbols.extend_from_slice(body);
        symbols.push(Symbol::Label(LabelId(label)));
        AbstractTrace { id: String::new(), symbols, rnn_label: LabelId(label), gold_label: None }
    }

    #[test]
    fn repeated_trace_gives_a_chain() {
        let ts = AbstractTraceSet { labels: labels(), k: 1, traces: vec![trace(&[A], 1); 100] };
        let p = extract_pfa(&ts, &LearnerConfig::default()).unwrap();
        assert_eq!(p.n_states(), 3);
        assert!(p.validate().is_empty());
        assert_eq!(p.step(0, A), Some(1));
        assert_eq!(p.outgoing(1)[0].prob, 1.0);
        assert_eq!(p.accepting().get(&LabelId(1)), Some(&2));
        assert_eq!(p.to_dot().matches("1.0000/c0").count(), 1);
    }

    #[test]
    fn empty_input_fails() {
        let ts = AbstractTraceSet { labels: labels(), k: 1, traces: vec![] };
        assert!(extract_pfa(&ts, &LearnerConfig::default()).is_err());
        let bad = AbstractTraceSet {
            labels: labels(),
            k: 1,
            traces: vec![AbstractTrace { id: "x".into(), symbols: vec![Symbol::Initial, A], rnn_label: LabelId(0), gold_label: None }],
        };
        assert!(extract_pfa(&bad, &LearnerConfig::default()).is_err());
    }

    #[test]
    fn one_accepting_state_per_label() {
        let traces = vec![
            trace(&[A], 1),
            trace(&[A, B], 0),
            trace(&[B, B, A], 1),
            trace(&[B], 0),
            trace(&[A, A, A, B], 1),
        ];
        let ts = AbstractTraceSet { labels: labels(), k: 2, traces };
        for rule in [MergeRule::FlowConserving, MergeRule::AncestorPropagating] {
            let cfg = LearnerConfig { merge_rule: rule, ..Default::default() };
            let p = extract_pfa(&ts, &cfg).unwrap();
            assert_eq!(p.accepting().len(), 2);
            assert!(p.validate().is_empty(), "{:?}", p.validate());
        }
    }

    #[test]
    fn tiny_epsilon_keeps_distinct_futures_apart() {
        let mut traces = Vec::new();
        for _ in 0..5 {
            traces.push(trace(&[A, A], 1));
            traces.push(trace(&[B, A, B], 0));
        }
        let ts = AbstractTraceSet { labels: labels(), k: 2, traces };
        let learned = learn(&ts, &LearnerConfig::with_epsilon(1e-9)).unwrap();
        // 6 interior tree nodes plus one accepting state per label
        let fresh = build_fpt(&ts).unwrap();
        let interior = fresh.live_nodes().filter(|n| !matches!(n.symbol, Some(Symbol::Label(_)))).count();
        assert_eq!(learned.pfa.n_states(), interior + 2);
    }
}
