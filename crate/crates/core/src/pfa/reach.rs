//! Label-reachability probabilities on the symbol-free Markov chain of a
//! PFA: a direct linear solve, and value iteration as an independent route.

use std::collections::VecDeque;

use super::{Pfa, StateId};
use crate::trace_model::LabelId;

/// Probability per label, indexed by label id.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelDistribution(pub Vec<f64>);

impl LabelDistribution {
    pub fn zeros(n: usize) -> Self {
        LabelDistribution(vec![0.0; n])
    }

    pub fn get(&self, l: LabelId) -> f64 {
        self.0.get(l.index()).copied().unwrap_or(0.0)
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Most likely label; ties go to the lowest id.
    pub fn argmax(&self) -> LabelId {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        LabelId(best as u32)
    }

    pub fn iter(&self) -> impl Iterator<Item = (LabelId, f64)> + '_ {
        self.0.iter().enumerate().map(|(i, &p)| (LabelId(i as u32), p))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReachMethod {
    /// Gaussian elimination with partial pivoting; falls back to value
    /// iteration at the given tolerance if the system is numerically singular.
    Linear { fallback_tolerance: f64 },
    /// Jacobi value iteration from zero, stopping once the largest update is
    /// below `tolerance` or after `max_sweeps`.
    Iterative { tolerance: f64, max_sweeps: usize },
}

impl Default for ReachMethod {
    fn default() -> Self {
        ReachMethod::Linear { fallback_tolerance: 1e-9 }
    }
}

/// Reachability distribution for every state.
#[derive(Clone, Debug, PartialEq)]
pub struct ReachTable {
    rows: Vec<LabelDistribution>,
    /// Sweeps used by value iteration (0 for a successful linear solve).
    pub sweeps: usize,
    pub converged: bool,
}

impl ReachTable {
    pub fn compute(p: &Pfa, method: ReachMethod) -> ReachTable {
        let problem = Problem::new(p);
        match method {
            ReachMethod::Linear { fallback_tolerance } => match problem.solve_linear() {
                Some(x) => problem.table(x, 0, true),
                None => {
                    let (x, sweeps, ok) = problem.iterate(fallback_tolerance, 1_000_000);
                    problem.table(x, sweeps, ok)
                }
            },
            ReachMethod::Iterative { tolerance, max_sweeps } => {
                let (x, sweeps, ok) = problem.iterate(tolerance, max_sweeps);
                problem.table(x, sweeps, ok)
            }
        }
    }

    pub fn get(&self, s: StateId) -> &LabelDistribution {
        &self.rows[s]
    }

    pub fn rows(&self) -> &[LabelDistribution] {
        &self.rows
    }
}

/// The transient part of the chain: states that are not accepting but can
/// reach some accepting state. Every other non-accepting state reaches
/// nothing.
struct Problem {
    n_states: usize,
    n_labels: usize,
    /// accepting state -> label index
    accept_of: Vec<Option<usize>>,
    transient: Vec<StateId>,
    index: Vec<Option<usize>>,
    /// rows over transient indices
    inner: Vec<Vec<(usize, f64)>>,
    /// per transient state, one-step mass into each label
    rhs: Vec<Vec<f64>>,
}

impl Problem {
    fn new(p: &Pfa) -> Problem {
        let n = p.n_states();
        let n_labels = p.labels().len();
        let mut accept_of = vec![None; n];
        for (&l, &s) in p.accepting() {
            accept_of[s] = Some(l.index());
        }
        let rows = p.chain_rows();

        let mut preds: Vec<Vec<StateId>> = vec![Vec::new(); n];
        for (s, row) in rows.iter().enumerate() {
            if accept_of[s].is_none() {
                for &(t, _) in row {
                    preds[t].push(s);
                }
            }
        }
        let mut reaches = vec![false; n];
        let mut queue: VecDeque<StateId> = (0..n).filter(|&s| accept_of[s].is_some()).collect();
        for &s in &queue {
            reaches[s] = true;
        }
        while let Some(s) = queue.pop_front() {
            for &q in &preds[s] {
                if !reaches[q] {
                    reaches[q] = true;
                    queue.push_back(q);
                }
            }
        }
        let transient: Vec<StateId> = (0..n).filter(|&s| reaches[s] && accept_of[s].is_none()).collect();
        let mut index = vec![None; n];
        for (i, &s) in transient.iter().enumerate() {
            index[s] = Some(i);
        }
        let mut inner = Vec::with_capacity(transient.len());
        let mut rhs = Vec::with_capacity(transient.len());
        for &s in &transient {
            let mut r = Vec::new();
            let mut b = vec![0.0; n_labels];
            for &(t, pr) in &rows[s] {
                if let Some(l) = accept_of[t] {
                    b[l] += pr;
                } else if let Some(j) = index[t] {
                    r.push((j, pr));
                }
            }
            inner.push(r);
            rhs.push(b);
        }
        Problem { n_states: n, n_labels, accept_of, transient, index, inner, rhs }
    }

    /// Solves `(I - P_TT) X = B` for all labels at once.
    fn solve_linear(&self) -> Option<Vec<Vec<f64>>> {
        let m = self.transient.len();
        let w = m + self.n_labels;
        let mut a = vec![0.0; m * w];
        for i in 0..m {
            a[i * w + i] = 1.0;
            for &(j, p) in &self.inner[i] {
                a[i * w + j] -= p;
            }
            a[i * w + m..(i + 1) * w].copy_from_slice(&self.rhs[i]);
        }
        for col in 0..m {
            let pivot = (col..m).max_by(|&x, &y| a[x * w + col].abs().total_cmp(&a[y * w + col].abs()))?;
            if a[pivot * w + col].abs() < 1e-14 {
                return None;
            }
            if pivot != col {
                for k in 0..w {
                    a.swap(pivot * w + k, col * w + k);
                }
            }
            let d = a[col * w + col];
            for row in col + 1..m {
                let f = a[row * w + col] / d;
                if f != 0.0 {
                    for k in col..w {
                        a[row * w + k] -= f * a[col * w + k];
                    }
                }
            }
        }
        let mut x = vec![vec![0.0; self.n_labels]; m];
        for i in (0..m).rev() {
            for l in 0..self.n_labels {
                let mut v = a[i * w + m + l];
                for j in i + 1..m {
                    v -= a[i * w + j] * x[j][l];
                }
                x[i][l] = v / a[i * w + i];
            }
        }
        Some(x)
    }

    fn iterate(&self, tolerance: f64, max_sweeps: usize) -> (Vec<Vec<f64>>, usize, bool) {
        let m = self.transient.len();
        let mut x = vec![vec![0.0; self.n_labels]; m];
        let mut next = x.clone();
        for sweep in 1..=max_sweeps {
            let mut delta: f64 = 0.0;
            for i in 0..m {
                for l in 0..self.n_labels {
                    let v = self.rhs[i][l] + self.inner[i].iter().map(|&(j, p)| p * x[j][l]).sum::<f64>();
                    delta = delta.max((v - x[i][l]).abs());
                    next[i][l] = v;
                }
            }
            std::mem::swap(&mut x, &mut next);
            if delta < tolerance {
                return (x, sweep, true);
            }
        }
        (x, max_sweeps, m == 0)
    }

    fn table(&self, x: Vec<Vec<f64>>, sweeps: usize, converged: bool) -> ReachTable {
        let rows = (0..self.n_states)
            .map(|s| {
                let mut d = LabelDistribution::zeros(self.n_labels);
                if let Some(l) = self.accept_of[s] {
                    d.0[l] = 1.0;
                } else if let Some(i) = self.index[s] {
                    d.0.clone_from(&x[i]);
                }
                d
            })
            .collect();
        ReachTable { rows, sweeps, converged }
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::{build, split_pfa, N, P};
    use super::super::Transition;
    use super::*;
    use crate::trace_model::Symbol;

    #[test]
    fn methods_agree_on_a_cycle() {
        // 0 <-> 1 with exits; solve by hand: x0 = .5 x1 + .2, x1 = .4 x0 + .3
        let ts = vec![
            Transition { from: 0, symbol: Symbol::Cluster(0), to: 1, prob: 0.5 },
            Transition { from: 0, symbol: Symbol::Label(P), to: 2, prob: 0.2 },
            Transition { from: 0, symbol: Symbol::Label(N), to: 3, prob: 0.3 },
            Transition { from: 1, symbol: Symbol::Cluster(1), to: 0, prob: 0.4 },
            Transition { from: 1, symbol: Symbol::Label(P), to: 2, prob: 0.3 },
            Transition { from: 1, symbol: Symbol::Label(N), to: 3, prob: 0.3 },
        ];
        let p = build(4, &[(P, 2), (N, 3)], ts, vec![0.0, 0.0, 1.0, 1.0]);
        let x0 = (0.5 * 0.3 + 0.2) / (1.0 - 0.5 * 0.4);
        let lin = ReachTable::compute(&p, ReachMethod::default());
        let it = ReachTable::compute(&p, ReachMethod::Iterative { tolerance: 1e-14, max_sweeps: 100_000 });
        assert!((lin.get(0).get(P) - x0).abs() < 1e-12);
        assert!(it.converged);
        for s in 0..4 {
            for l in [N, P] {
                assert!((lin.get(s).get(l) - it.get(s).get(l)).abs() < 1e-12);
            }
        }
        assert!((lin.get(0).sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn absorbing_rows_are_unit() {
        let t = ReachTable::compute(&split_pfa(0.25), ReachMethod::default());
        assert_eq!(t.get(1).0, vec![0.0, 1.0]);
        assert_eq!(t.get(2).0, vec![1.0, 0.0]);
    }

    #[test]
    fn trapped_state_reaches_nothing() {
        let p = build(2, &[(P, 1)], vec![], vec![1.0, 1.0]);
        let t = ReachTable::compute(&p, ReachMethod::default());
        assert_eq!(t.get(0).sum(), 0.0);
    }
}
