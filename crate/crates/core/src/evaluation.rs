//! Agreement metrics, the adversarial score and rank-based AUC.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::pfa::{Pfa, Prediction, Predictor};
use crate::trace_model::{AbstractTrace, AbstractTraceSet, LabelId};

/// Scores are capped here when the competing mass vanishes.
pub const SCORE_CAP: f64 = 1e12;
const DENOMINATOR_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub n: usize,
    pub fidelity: f64,
    pub accuracy: Option<f64>,
    /// `confusion[i][j]`: traces with rnn_label `i` predicted as `j`.
    pub per_label_confusion: Vec<Vec<u64>>,
    pub mean_miss_rate: f64,
}

fn check_labels(p: &Pfa, ts: &AbstractTraceSet) -> Result<()> {
    if p.labels() != &ts.labels {
        return Err(Error::LabelTable("trace labels differ from the model's labels".into()));
    }
    Ok(())
}

pub fn predict_all(pred: &Predictor<'_>, traces: &[AbstractTrace], exec: Exec) -> Result<Vec<Prediction>> {
    exec.map(traces, |t| pred.predict(t)).into_iter().collect()
}

pub fn fidelity(p: &Pfa, ts: &AbstractTraceSet) -> Result<f64> {
    if ts.is_empty() {
        return Err(Error::Empty("fidelity needs at least one trace"));
    }
    check_labels(p, ts)?;
    let preds = predict_all(&p.predictor(), &ts.traces, Exec::default())?;
    let agree = preds.iter().zip(&ts.traces).filter(|(pr, t)| pr.label == t.rnn_label).count();
    Ok(agree as f64 / ts.len() as f64)
}

pub fn accuracy(p: &Pfa, ts: &AbstractTraceSet) -> Result<f64> {
    if ts.is_empty() {
        return Err(Error::Empty("accuracy needs at least one trace"));
    }
    if let Some(t) = ts.traces.iter().find(|t| t.gold_label.is_none()) {
        return Err(Error::MissingGold(t.id.clone()));
    }
    check_labels(p, ts)?;
    let preds = predict_all(&p.predictor(), &ts.traces, Exec::default())?;
    let ok = preds.iter().zip(&ts.traces).filter(|(pr, t)| Some(pr.label) == t.gold_label).count();
    Ok(ok as f64 / ts.len() as f64)
}

/// Fidelity, accuracy (when every trace has a gold label), confusion
/// counts and the rate of unmatched letters during simulation.
pub fn evaluate(p: &Pfa, ts: &AbstractTraceSet, exec: Exec) -> Result<EvalReport> {
    if ts.is_empty() {
        return Err(Error::Empty("evaluation needs at least one trace"));
    }
    check_labels(p, ts)?;
    let preds = predict_all(&p.predictor(), &ts.traces, exec)?;
    let nl = ts.labels.len();
    let mut confusion = vec![vec![0u64; nl]; nl];
    let (mut agree, mut correct, mut misses, mut steps) = (0usize, 0usize, 0usize, 0usize);
    let all_gold = ts.traces.iter().all(|t| t.gold_label.is_some());
    for (pr, t) in preds.iter().zip(&ts.traces) {
        confusion[t.rnn_label.index()][pr.label.index()] += 1;
        agree += usize::from(pr.label == t.rnn_label);
        correct += usize::from(Some(pr.label) == t.gold_label);
        misses += pr.misses;
        steps += pr.steps;
    }
    let n = ts.len();
    Ok(EvalReport {
        n,
        fidelity: agree as f64 / n as f64,
        accuracy: all_gold.then(|| correct as f64 / n as f64),
        per_label_confusion: confusion,
        mean_miss_rate: if steps == 0 { 0.0 } else { misses as f64 / steps as f64 },
    })
}

impl EvalReport {
    /// Fixed-order plain-text table.
    pub fn table(&self, labels: &crate::trace_model::LabelTable) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<16}{}\n", "samples", self.n));
        out.push_str(&format!("{:<16}{:.4}\n", "fidelity", self.fidelity));
        match self.accuracy {
            Some(a) => out.push_str(&format!("{:<16}{:.4}\n", "accuracy", a)),
            None => out.push_str(&format!("{:<16}-\n", "accuracy")),
        }
        out.push_str(&format!("{:<16}{:.4}\n", "miss rate", self.mean_miss_rate));
        out.push_str("confusion (rows: rnn label, cols: predicted)\n");
        out.push_str(&format!("{:<8}", ""));
        for l in labels.labels() {
            out.push_str(&format!("{:>8}", l.name));
        }
        out.push('\n');
        for (i, row) in self.per_label_confusion.iter().enumerate() {
            out.push_str(&format!("{:<8}", labels.name(LabelId(i as u32))));
            for c in row {
                out.push_str(&format!("{c:>8}"));
            }
            out.push('\n');
        }
        out
    }
}

/// `T(x)`: mass on the predicted label over the summed mass of the others.
pub fn score_from_prediction(d: &crate::pfa::LabelDistribution, y: LabelId) -> f64 {
    let own = d.get(y);
    if own <= 0.0 {
        return 0.0;
    }
    let rest: f64 = d.iter().filter(|&(l, _)| l != y).map(|(_, p)| p).sum();
    if rest < DENOMINATOR_FLOOR {
        SCORE_CAP
    } else {
        (own / rest).min(SCORE_CAP)
    }
}

pub fn adv_score(p: &Pfa, t: &AbstractTrace, tolerance: f64) -> Result<f64> {
    let (_, d) = crate::pfa::predict(p, t, tolerance)?;
    Ok(score_from_prediction(&d, t.rnn_label))
}

/// Adversarial iff the score is strictly below the threshold.
pub fn detect(p: &Pfa, t: &AbstractTrace, threshold: f64) -> Result<bool> {
    Ok(adv_score(p, t, 1e-9)? < threshold)
}

pub fn score_all(p: &Pfa, traces: &[AbstractTrace], exec: Exec) -> Result<Vec<f64>> {
    let pred = p.predictor();
    let preds = predict_all(&pred, traces, exec)?;
    Ok(preds.iter().zip(traces).map(|(pr, t)| score_from_prediction(&pr.distribution, t.rnn_label)).collect())
}

/// Probability that a benign score exceeds an adversarial one, ties
/// counting one half (the Mann–Whitney statistic over `|B|·|A|`).
pub fn auc(benign: &[f64], adversarial: &[f64]) -> Result<f64> {
    if benign.is_empty() || adversarial.is_empty() {
        return Err(Error::Empty("AUC needs both benign and adversarial scores"));
    }
    if benign.iter().chain(adversarial).any(|x| x.is_nan()) {
        return Err(Error::Config("AUC scores must not be NaN".into()));
    }
    let mut all: Vec<(f64, bool)> = benign.iter().map(|&x| (x, true)).chain(adversarial.iter().map(|&x| (x, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // twice the benign rank sum, using midranks for ties
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let twice_midrank = (i + 1 + j + 1) as u128;
        let benign_here = all[i..=j].iter().filter(|x| x.1).count() as u128;
        twice_rank_sum += twice_midrank * benign_here;
        i = j + 1;
    }
    let (nb, na) = (benign.len() as u128, adversarial.len() as u128);
    let twice_u = twice_rank_sum - nb * (nb + 1);
    let twice_total = 2 * nb * na;
    // computing the smaller side directly makes auc(A,B) + auc(B,A) == 1 exact
    Ok(if 2 * twice_u <= twice_total {
        twice_u as f64 / twice_total as f64
    } else {
        1.0 - (twice_total - twice_u) as f64 / twice_total as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pfa::LabelDistribution;
    use crate::pfa::Transition;
    use crate::trace_model::{LabelTable, Symbol};
    use std::collections::BTreeMap;

    const N: LabelId = LabelId(0);
    const P: LabelId = LabelId(1);

    /// c0 -> 0.9 P, c1 -> 0.8 N (from two interior states)
    fn model() -> Pfa {
        let labels = LabelTable::from_names(&["N", "P"]).unwrap();
        let t = |from, symbol, to, prob| Transition { from, symbol, to, prob };
        Pfa::validated(
            labels,
            vec![],
            5,
            0,
            BTreeMap::from([(N, 4), (P, 3)]),
            vec![
                t(0, Symbol::Cluster(0), 1, 0.5),
                t(0, Symbol::Cluster(1), 2, 0.5),
                t(1, Symbol::Label(P), 3, 0.9),
                t(1, Symbol::Label(N), 4, 0.1),
                t(2, Symbol::Label(P), 3, 0.2),
                t(2, Symbol::Label(N), 4, 0.8),
            ],
            vec![0.0, 0.0, 0.0, 1.0, 1.0],
        )
        .unwrap()
    }

    fn tr(c: u32, rnn: LabelId, gold: Option<LabelId>) -> AbstractTrace {
        AbstractTrace {
            id: format!("c{c}"),
            symbols: vec![Symbol::Initial, Symbol::Cluster(c), Symbol::Label(rnn)],
            rnn_label: rnn,
            gold_label: gold,
        }
    }

    fn set(traces: Vec<AbstractTrace>) -> AbstractTraceSet {
        AbstractTraceSet { labels: LabelTable::from_names(&["N", "P"]).unwrap(), k: 2, traces }
    }

    #[test]
    fn fidelity_fixtures() {
        let p = model();
        assert_eq!(fidelity(&p, &set(vec![tr(0, P, None), tr(1, N, None)])).unwrap(), 1.0);
        assert_eq!(fidelity(&p, &set(vec![tr(0, P, None), tr(1, N, None), tr(1, P, None)])).unwrap(), 2.0 / 3.0);
        assert_eq!(fidelity(&p, &set(vec![tr(0, N, None)])).unwrap(), 0.0);
        assert!(fidelity(&p, &set(vec![])).is_err());
    }

    #[test]
    fn accuracy_fixtures() {
        let p = model();
        let all = set(vec![tr(0, P, Some(P)), tr(1, P, Some(N))]);
        assert_eq!(accuracy(&p, &all).unwrap(), 1.0);
        let quarter = set(vec![tr(0, P, Some(P)), tr(0, P, Some(N)), tr(1, P, Some(P)), tr(1, N, Some(P))]);
        assert_eq!(accuracy(&p, &quarter).unwrap(), 0.25);
        assert!(matches!(accuracy(&p, &set(vec![tr(0, P, None)])), Err(Error::MissingGold(_))));
    }

    #[test]
    fn report_counts() {
        let p = model();
        let mut odd = tr(0, P, Some(P));
        odd.symbols.insert(2, Symbol::Cluster(1)); // no c1 edge from state 1
        let r = evaluate(&p, &set(vec![odd, tr(1, N, Some(N)), tr(1, P, Some(N))]), Exec::Sequential).unwrap();
        assert_eq!(r.n, 3);
        assert_eq!(r.fidelity, 2.0 / 3.0);
        assert_eq!(r.accuracy, Some(1.0));
        assert_eq!(r.per_label_confusion, vec![vec![1, 0], vec![1, 1]]);
        assert_eq!(r.mean_miss_rate, 0.25);
        assert!(r.table(p.labels()).contains("fidelity        0.6667"));
    }

    #[test]
    fn scores() {
        let d = LabelDistribution(vec![0.5, 0.5]);
        assert_eq!(score_from_prediction(&d, P), 1.0);
        let d = LabelDistribution(vec![0.1537, 0.8463]);
        assert!((score_from_prediction(&d, P) - 0.8463 / 0.1537).abs() < 1e-12);
        assert!((score_from_prediction(&d, P) - 5.506).abs() < 1e-3);
        assert_eq!(score_from_prediction(&LabelDistribution(vec![1.0, 0.0]), P), 0.0);
        assert_eq!(score_from_prediction(&LabelDistribution(vec![0.0, 1.0]), P), SCORE_CAP);

        let p = model();
        let s = adv_score(&p, &tr(0, P, None), 1e-9).unwrap();
        assert!((s - 9.0).abs() < 1e-9);
        assert!(!detect(&p, &tr(0, P, None), 1.0).unwrap());
        assert!(detect(&p, &tr(0, N, None), 1.0).unwrap()); // 0.1 / 0.9
        // exactly at the threshold is benign
        assert!(!detect(&p, &tr(0, P, None), s).unwrap());
    }

    #[test]
    fn auc_fixtures() {
        assert_eq!(auc(&[2.0, 3.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auc(&[1.0], &[1.0]).unwrap(), 0.5);
        assert_eq!(auc(&[0.9, 0.8], &[0.85, 0.1]).unwrap(), 0.75);
        assert_eq!(auc(&[0.85, 0.1], &[0.9, 0.8]).unwrap(), 0.25);
        assert!(auc(&[], &[1.0]).is_err());
    }
}
