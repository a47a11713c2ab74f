//! Hidden-state abstraction: K-means over pooled hidden vectors, and the
//! mapping from concrete traces to abstract traces.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::trace_model::{AbstractTrace, AbstractTraceSet, ConcreteTrace, ConcreteTraceSet, Symbol};

#[derive(Clone, Debug)]
pub struct KMeansConfig {
    pub max_iterations: usize,
    /// Lloyd stops once one iteration improves inertia by less than this.
    pub convergence_tolerance: f64,
    pub seed: u64,
    pub restarts: usize,
    pub exec: Exec,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { max_iterations: 300, convergence_tolerance: 1e-9, seed: 0, restarts: 5, exec: Exec::default() }
    }
}

impl KMeansConfig {
    fn check(&self) -> Result<()> {
        if self.max_iterations == 0 || self.restarts == 0 {
            return Err(Error::Config("max_iterations and restarts must be positive".into()));
        }
        if self.convergence_tolerance.is_nan() || self.convergence_tolerance < 0.0 {
            return Err(Error::Config("convergence_tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

/// A fitted clustering `C: H -> {0..K-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringFunction {
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub seed: u64,
}

/// Inertia after every assignment step of one restart.
#[derive(Clone, Debug)]
pub struct RestartTrace {
    pub inertia_history: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct KMeansFit {
    pub clustering: ClusteringFunction,
    pub restarts: Vec<RestartTrace>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid in a flat `k*dim` buffer; ties go to the lower index.
fn nearest(point: &[f64], centroids: &[f64], dim: usize) -> (u32, f64) {
    let mut best = (0u32, f64::INFINITY);
    for (i, c) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (i as u32, d);
        }
    }
    best
}

impl ClusteringFunction {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    pub fn assign(&self, v: &[f64]) -> Result<u32> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: v.len() });
        }
        let mut best = (0u32, f64::INFINITY);
        for (i, c) in self.centroids.iter().enumerate() {
            let d = sq_dist(v, c);
            if d < best.1 {
                best = (i as u32, d);
            }
        }
        Ok(best.0)
    }

    /// Sum of squared distances from each vector to its nearest centroid.
    pub fn inertia_of(&self, vectors: &[Vec<f64>]) -> f64 {
        let flat: Vec<f64> = self.centroids.concat();
        vectors.iter().map(|v| nearest(v, &flat, self.dim()).1).sum()
    }

    pub fn abstract_trace(&self, ct: &ConcreteTrace) -> Result<AbstractTrace> {
        let mut symbols = Vec::with_capacity(ct.hidden.len() + 2);
        symbols.push(Symbol::Initial);
        for h in &ct.hidden {
            symbols.push(Symbol::Cluster(self.assign(h)?));
        }
        symbols.push(Symbol::Label(ct.rnn_label));
        Ok(AbstractTrace { id: ct.id.clone(), symbols, rnn_label: ct.rnn_label, gold_label: ct.gold_label })
    }

    pub fn abstract_all(&self, ts: &ConcreteTraceSet) -> Result<AbstractTraceSet> {
        self.abstract_all_with(ts, Exec::default())
    }

    pub fn abstract_all_with(&self, ts: &ConcreteTraceSet, exec: Exec) -> Result<AbstractTraceSet> {
        if !ts.is_empty() && ts.dim != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: ts.dim });
        }
        let traces = exec.map(&ts.traces, |t| self.abstract_trace(t)).into_iter().collect::<Result<Vec<_>>>()?;
        Ok(AbstractTraceSet { labels: ts.labels.clone(), k: self.k(), traces })
    }
}

/// All hidden vectors of a trace set, pooled over samples and time steps.
pub fn pooled_vectors(ts: &ConcreteTraceSet) -> Vec<Vec<f64>> {
    ts.traces.iter().flat_map(|t| t.hidden.iter().cloned()).collect()
}

fn count_distinct_up_to(vectors: &[Vec<f64>], cap: usize) -> usize {
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    for v in vectors {
        // +0.0 and -0.0 are the same point
        seen.insert(v.iter().map(|x| if *x == 0.0 { 0 } else { x.to_bits() }).collect());
        if seen.len() >= cap {
            break;
        }
    }
    seen.len()
}

pub fn fit_kmeans(vectors: &[Vec<f64>], k: usize, cfg: &KMeansConfig) -> Result<ClusteringFunction> {
    fit_kmeans_detailed(vectors, k, cfg).map(|f| f.clustering)
}

/// Best-of-restarts K-means (k-means++ seeding, then Lloyd iterations),
/// returning the per-restart inertia histories too.
pub fn fit_kmeans_detailed(vectors: &[Vec<f64>], k: usize, cfg: &KMeansConfig) -> Result<KMeansFit> {
    cfg.check()?;
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let dim = vectors.first().map_or(0, Vec::len);
    if dim == 0 {
        return Err(Error::TooFewPoints { distinct: 0, k });
    }
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, found: v.len() });
    }
    let distinct = count_distinct_up_to(vectors, k);
    if distinct < k {
        return Err(Error::TooFewPoints { distinct, k });
    }
    let data: Vec<f64> = vectors.concat();

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut traces = Vec::with_capacity(cfg.restarts);
    for restart in 0..cfg.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(restart as u64);
        let (centroids, inertia, history) = lloyd(&data, dim, k, cfg, &mut rng);
        traces.push(RestartTrace { inertia_history: history });
        if best.as_ref().is_none_or(|(_, b)| inertia < *b) {
            best = Some((centroids, inertia));
        }
    }
    let (centroids, inertia) = best.expect("restarts >= 1");
    Ok(KMeansFit {
        clustering: ClusteringFunction {
            centroids: centroids.chunks_exact(dim).map(<[f64]>::to_vec).collect(),
            inertia,
            seed: cfg.seed,
        },
        restarts: traces,
    })
}

fn kmeanspp(data: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = data.len() / dim;
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(&data[first * dim..(first + 1) * dim]);
    let mut d2: Vec<f64> = data.chunks_exact(dim).map(|p| sq_dist(p, &centroids[..dim])).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        // total > 0 because at least k distinct points exist
        let mut target = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, &w) in d2.iter().enumerate() {
            if w > 0.0 && target < w {
                pick = i;
                break;
            }
            target -= w;
        }
        if d2[pick] == 0.0 {
            pick = d2.iter().rposition(|&w| w > 0.0).unwrap_or(pick);
        }
        let c = data[pick * dim..(pick + 1) * dim].to_vec();
        for (p, w) in data.chunks_exact(dim).zip(d2.iter_mut()) {
            *w = w.min(sq_dist(p, &c));
        }
        centroids.extend_from_slice(&c);
    }
    centroids
}

fn assign_all(data: &[f64], centroids: &[f64], dim: usize, exec: Exec) -> (Vec<(u32, f64)>, f64) {
    const CHUNK: usize = 4096;
    let parts = exec.map_chunks(data, CHUNK * dim, |chunk| {
        chunk.chunks_exact(dim).map(|p| nearest(p, centroids, dim)).collect::<Vec<_>>()
    });
    let assignment: Vec<(u32, f64)> = parts.into_iter().flatten().collect();
    let inertia = assignment.iter().map(|a| a.1).sum();
    (assignment, inertia)
}

fn update_centroids(data: &[f64], dim: usize, k: usize, assignment: &[(u32, f64)]) -> Vec<f64> {
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (p, &(c, _)) in data.chunks_exact(dim).zip(assignment) {
        let c = c as usize;
        counts[c] += 1;
        for (s, x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 {
            for s in &mut sums[c * dim..(c + 1) * dim] {
                *s /= n as f64;
            }
        }
    }
    let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
    if !empty.is_empty() {
        // move each empty centroid onto the point farthest from its own centroid
        let mut far: Vec<f64> = data
            .chunks_exact(dim)
            .zip(assignment)
            .map(|(p, &(c, _))| {
                let c = c as usize;
                if counts[c] == 0 { 0.0 } else { sq_dist(p, &sums[c * dim..(c + 1) * dim]) }
            })
            .collect();
        for c in empty {
            let mut pick = 0;
            for (i, &d) in far.iter().enumerate() {
                if d > far[pick] {
                    pick = i;
                }
            }
            sums[c * dim..(c + 1) * dim].copy_from_slice(&data[pick * dim..(pick + 1) * dim]);
            far[pick] = 0.0;
        }
    }
    sums
}

fn lloyd(data: &[f64], dim: usize, k: usize, cfg: &KMeansConfig, rng: &mut ChaCha8Rng) -> (Vec<f64>, f64, Vec<f64>) {
    let mut centroids = kmeanspp(data, dim, k, rng);
    let (mut assignment, mut inertia) = assign_all(data, &centroids, dim, cfg.exec);
    let mut history = vec![inertia];
    for _ in 0..cfg.max_iterations {
        let next = update_centroids(data, dim, k, &assignment);
        let (next_assignment, next_inertia) = assign_all(data, &next, dim, cfg.exec);
        history.push(next_inertia);
        if next_inertia > inertia {
            // only reachable through rounding; keep the better state
            break;
        }
        let improvement = inertia - next_inertia;
        centroids = next;
        assignment = next_assignment;
        inertia = next_inertia;
        if improvement < cfg.convergence_tolerance {
            break;
        }
    }
    (centroids, inertia, history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace_model::{LabelId, LabelTable};

    fn pts(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    /// Exhaustive 2-partition search for the minimum within-cluster sum of squares.
    fn best_two_partition(xs: &[f64]) -> (f64, Vec<f64>) {
        let n = xs.len();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1..(1u32 << n) - 1 {
            let (a, b): (Vec<f64>, Vec<f64>) = (0..n).map(|i| (mask >> i) & 1 == 1).zip(xs).fold(
                (vec![], vec![]),
                |(mut a, mut b), (left, &x)| {
                    if left { a.push(x) } else { b.push(x) }
                    (a, b)
                },
            );
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let ss = |v: &[f64]| {
                let m = mean(v);
                v.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
            };
            let cost = ss(&a) + ss(&b);
            if cost < best.0 {
                let mut ms = vec![mean(&a), mean(&b)];
                ms.sort_by(f64::total_cmp);
                best = (cost, ms);
            }
        }
        best
    }

    #[test]
    fn one_dimensional_two_clusters_matches_enumeration() {
        let xs = [0.0, 1.0, 10.0, 11.0];
        let (cost, means) = best_two_partition(&xs);
        assert_eq!(means, vec![0.5, 10.5]);
        let cf = fit_kmeans(&pts(&xs), 2, &KMeansConfig::default()).unwrap();
        let mut got: Vec<f64> = cf.centroids.iter().map(|c| c[0]).collect();
        got.sort_by(f64::total_cmp);
        assert_eq!(got, means);
        assert_eq!(cf.inertia, cost);
        assert_eq!(cf.assign(&[0.0]).unwrap(), cf.assign(&[1.0]).unwrap());
        assert_ne!(cf.assign(&[1.0]).unwrap(), cf.assign(&[10.0]).unwrap());
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let v = vec![vec![1.0, 2.0], vec![3.0, -2.0], vec![5.0, 6.0]];
        let cf = fit_kmeans(&v, 1, &KMeansConfig::default()).unwrap();
        assert!((cf.centroids[0][0] - 3.0).abs() < 1e-12);
        assert!((cf.centroids[0][1] - 2.0).abs() < 1e-12);
        let expected: f64 = v.iter().map(|p| sq_dist(p, &[3.0, 2.0])).sum();
        assert!((cf.inertia - expected).abs() < 1e-9);
    }

    #[test]
    fn k_equal_to_point_count_has_zero_inertia() {
        let v = pts(&[3.0, -1.0, 7.5, 2.25, 100.0]);
        let cf = fit_kmeans(&v, 5, &KMeansConfig::default()).unwrap();
        assert_eq!(cf.inertia, 0.0);
        for p in &v {
            let c = cf.assign(p).unwrap() as usize;
            assert_eq!(cf.centroids[c], *p);
        }
    }

    #[test]
    fn too_few_distinct_points() {
        let v = pts(&[1.0, 1.0, 1.0, 2.0]);
        assert!(matches!(fit_kmeans(&v, 3, &KMeansConfig::default()), Err(Error::TooFewPoints { distinct: 2, k: 3 })));
        assert!(fit_kmeans(&v, 2, &KMeansConfig::default()).is_ok());
    }

    #[test]
    fn assign_rules() {
        let cf = ClusteringFunction { centroids: vec![vec![0.5], vec![10.5]], inertia: 0.0, seed: 0 };
        assert_eq!(cf.assign(&[4.0]).unwrap(), 0);
        assert_eq!(cf.assign(&[10.5]).unwrap(), 1);
        assert_eq!(cf.assign(&[5.5]).unwrap(), 0); // equidistant
        assert!(matches!(cf.assign(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn abstract_trace_shape() {
        let cf = ClusteringFunction { centroids: vec![vec![0.0, 0.0]], inertia: 0.0, seed: 0 };
        let ct = ConcreteTrace { id: "x".into(), hidden: vec![vec![3.0, 4.0]], rnn_label: LabelId(1), gold_label: None };
        let at = cf.abstract_trace(&ct).unwrap();
        assert_eq!(at.symbols, vec![Symbol::Initial, Symbol::Cluster(0), Symbol::Label(LabelId(1))]);

        let cf2 = ClusteringFunction { centroids: vec![vec![0.0, 0.0], vec![5.0, 5.0]], inertia: 0.0, seed: 0 };
        let twice = ConcreteTrace { hidden: vec![vec![4.0, 4.0], vec![4.0, 4.0]], ..ct.clone() };
        let at = cf2.abstract_trace(&twice).unwrap();
        assert_eq!(at.symbols.len(), 4);
        assert_eq!(at.symbols[1], at.symbols[2]);

        let wrong = ConcreteTrace { hidden: vec![vec![1.0]], ..ct };
        assert!(cf.abstract_trace(&wrong).is_err());
    }

    #[test]
    fn abstract_all_keeps_bag_semantics() {
        let labels = LabelTable::from_names(&["N", "P"]).unwrap();
        let cf = ClusteringFunction { centroids: vec![vec![0.0], vec![1.0]], inertia: 0.0, seed: 0 };
        let empty = ConcreteTraceSet { labels: labels.clone(), dim: 1, traces: vec![] };
        assert!(cf.abstract_all(&empty).unwrap().is_empty());
        let t = ConcreteTrace { id: "dup".into(), hidden: vec![vec![0.9], vec![0.1]], rnn_label: LabelId(0), gold_label: None };
        let set = ConcreteTraceSet { labels, dim: 1, traces: vec![t.clone(), t] };
        let out = cf.abstract_all(&set).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out.traces[0], out.traces[1]);
        assert_eq!(out.traces[0].id, "dup");
        assert_eq!(out.k, 2);
    }

    #[test]
    fn seeded_fit_is_reproducible_across_exec_policies() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<Vec<f64>> = (0..3000).map(|_| vec![rng.random::<f64>(), rng.random::<f64>() * 4.0]).collect();
        let seq = KMeansConfig { exec: Exec::Sequential, seed: 3, ..Default::default() };
        let par = KMeansConfig { exec: Exec::Parallel, ..seq.clone() };
        let a = fit_kmeans(&v, 6, &seq).unwrap();
        let b = fit_kmeans(&v, 6, &par).unwrap();
        let c = fit_kmeans(&v, 6, &seq).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a.inertia.to_bits(), a.inertia_of(&v).to_bits());
    }
}
