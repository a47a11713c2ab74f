//! Frequency prefix tree over abstract traces.
//!
//! Nodes live in an arena and are addressed by id. Every node records its
//! frequency `F(n)` (how many traces pass through it), how many traces end
//! there, and for each outgoing symbol an edge count `E(n, σ)`. Before any
//! merging `E(n, σ) = F(n·σ)`; after the learner redirects edges a node may
//! have several parents, so probabilities are always `E(n, σ) / F(n)`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::trace_model::{AbstractTraceSet, LabelTable, Symbol};

pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub target: NodeId,
    pub count: u64,
}

#[derive(Clone, Debug)]
pub struct FptNode {
    pub id: NodeId,
    /// Edge label from the tree parent; `None` only for the root.
    pub symbol: Option<Symbol>,
    pub depth: usize,
    pub freq: u64,
    pub terminal: u64,
    pub children: BTreeMap<Symbol, Edge>,
    /// Tree parent. Redirected edges do not change it.
    pub parent: Option<NodeId>,
    pub alive: bool,
}

#[derive(Clone, Debug)]
pub struct Fpt {
    pub(crate) nodes: Vec<FptNode>,
    root: NodeId,
    alphabet: BTreeSet<Symbol>,
    total: u64,
}

impl Fpt {
    /// Builds the tree from weighted symbol sequences (already stripped of
    /// the initial symbol). Node ids follow breadth-first order with
    /// children visited in symbol order.
    pub fn from_sequences<'a, I>(seqs: I) -> Result<Fpt>
    where
        I: IntoIterator<Item = (&'a [Symbol], u64)>,
    {
        struct Raw {
            freq: u64,
            terminal: u64,
            children: BTreeMap<Symbol, usize>,
        }
        let mut raw = vec![Raw { freq: 0, terminal: 0, children: BTreeMap::new() }];
        let mut alphabet = BTreeSet::new();
        let mut total = 0;
        for (seq, count) in seqs {
            if count == 0 {
                continue;
            }
            total += count;
            let mut at = 0;
            raw[0].freq += count;
            for &sym in seq {
                alphabet.insert(sym);
                let next = match raw[at].children.get(&sym) {
                    Some(&n) => n,
                    None => {
                        raw.push(Raw { freq: 0, terminal: 0, children: BTreeMap::new() });
                        let n = raw.len() - 1;
                        raw[at].children.insert(sym, n);
                        n
                    }
                };
                raw[next].freq += count;
                at = next;
            }
            raw[at].terminal += count;
        }
        if total == 0 {
            return Err(Error::Empty("frequency prefix tree needs at least one trace"));
        }

        // canonical breadth-first renumbering
        let mut order = Vec::with_capacity(raw.len());
        let mut info: Vec<(Option<Symbol>, Option<usize>, usize)> = vec![(None, None, 0); raw.len()];
        let mut queue = VecDeque::from([0usize]);
        while let Some(r) = queue.pop_front() {
            order.push(r);
            for (&sym, &c) in &raw[r].children {
                info[c] = (Some(sym), Some(r), info[r].2 + 1);
                queue.push_back(c);
            }
        }
        let mut new_id = vec![0; raw.len()];
        for (i, &r) in order.iter().enumerate() {
            new_id[r] = i;
        }
        let nodes = order
            .iter()
            .enumerate()
            .map(|(id, &r)| {
                let (symbol, parent, depth) = info[r];
                FptNode {
                    id,
                    symbol,
                    depth,
                    freq: raw[r].freq,
                    terminal: raw[r].terminal,
                    children: raw[r]
                        .children
                        .iter()
                        .map(|(&s, &c)| (s, Edge { target: new_id[c], count: raw[c].freq }))
                        .collect(),
                    parent: parent.map(|p| new_id[p]),
                    alive: true,
                }
            })
            .collect();
        Ok(Fpt { nodes, root: 0, alphabet, total })
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn alphabet(&self) -> &BTreeSet<Symbol> {
        &self.alphabet
    }

    pub fn node(&self, n: NodeId) -> &FptNode {
        &self.nodes[n]
    }

    pub(crate) fn node_mut(&mut self, n: NodeId) -> &mut FptNode {
        &mut self.nodes[n]
    }

    /// Arena size, including nodes removed by merging.
    pub fn arena_len(&self) -> usize {
        self.nodes.len()
    }

    pub fn live_nodes(&self) -> impl Iterator<Item = &FptNode> {
        self.nodes.iter().filter(|n| n.alive)
    }

    pub fn freq(&self, n: NodeId) -> u64 {
        self.nodes[n].freq
    }

    pub fn child(&self, n: NodeId, sym: Symbol) -> Option<NodeId> {
        self.nodes[n].children.get(&sym).map(|e| e.target)
    }

    /// Follows `path` from the root.
    pub fn find(&self, path: &[Symbol]) -> Option<NodeId> {
        path.iter().try_fold(self.root, |at, &s| self.child(at, s))
    }

    /// Live nodes with an edge into `n`: `(source, symbol, count)`.
    pub fn incoming(&self, n: NodeId) -> Vec<(NodeId, Symbol, u64)> {
        self.live_nodes()
            .flat_map(|src| {
                src.children.iter().filter(|(_, e)| e.target == n).map(move |(&s, e)| (src.id, s, e.count))
            })
            .collect()
    }

    pub fn one_step_prob(&self, n: NodeId, sym: Symbol) -> f64 {
        let node = &self.nodes[n];
        match node.children.get(&sym) {
            Some(e) if node.freq > 0 => e.count as f64 / node.freq as f64,
            _ => 0.0,
        }
    }

    pub fn terminal_prob(&self, n: NodeId) -> f64 {
        let node = &self.nodes[n];
        if node.freq == 0 {
            0.0
        } else {
            node.terminal as f64 / node.freq as f64
        }
    }

    /// Residual mass `1 - Σ_σ P(n, n·σ)`, clamped into `[0, 1]`.
    pub fn self_loop_prob(&self, n: NodeId) -> f64 {
        let out: f64 = self.nodes[n].children.keys().map(|&s| self.one_step_prob(n, s)).sum();
        (1.0 - out).clamp(0.0, 1.0)
    }

    pub fn path_prob(&self, n: NodeId, path: &[Symbol]) -> f64 {
        let mut at = n;
        let mut p = 1.0;
        for &s in path {
            match self.child(at, s) {
                Some(next) => {
                    p *= self.one_step_prob(at, s);
                    at = next;
                }
                None => return 0.0,
            }
        }
        p
    }

    /// Nodes where `F(n) != terminal(n) + Σ E(n, σ)`.
    pub fn flow_violations(&self) -> Vec<NodeId> {
        self.live_nodes()
            .filter(|n| n.freq != n.terminal + n.children.values().map(|e| e.count).sum::<u64>())
            .map(|n| n.id)
            .collect()
    }

    /// Graphviz rendering: nodes labelled `F=…`, edges `σ:E`.
    pub fn to_dot(&self, labels: &LabelTable) -> String {
        let mut out = String::from("digraph fpt {\n  node [shape=circle];\n");
        for n in self.live_nodes() {
            let _ = writeln!(out, "  n{} [label=\"F={}\"];", n.id, n.freq);
        }
        for n in self.live_nodes() {
            for (s, e) in &n.children {
                let _ = writeln!(out, "  n{} -> n{} [label=\"{}:{}\"];", n.id, e.target, s.render(labels), e.count);
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Tree of a well-formed abstract trace bag; the leading initial symbol of
/// each trace is consumed by the root.
pub fn build_fpt(ts: &AbstractTraceSet) -> Result<Fpt> {
    if ts.is_empty() {
        return Err(Error::Empty("trace set"));
    }
    ts.validate()?;
    Fpt::from_sequences(ts.traces.iter().map(|t| (t.stripped(), 1)))
}
