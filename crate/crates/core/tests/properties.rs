mod common;

use std::collections::BTreeSet;

use pfa_extract::evaluation::{auc, fidelity};
use pfa_extract::fpt::build_fpt;
use pfa_extract::learner::{learn, LearnerConfig, MergeRule};
use pfa_extract::pfa::{ReachMethod, ReachTable};
use pfa_extract::trace_model::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn trace_set() -> impl Strategy<Value = AbstractTraceSet> {
    let trace = (prop::collection::vec(0u32..3, 0..6), 0u32..2);
    prop::collection::vec(trace, 1..60).prop_map(|raw| {
        let traces = raw
            .into_iter()
            .enumerate()
            .map(|(i, (letters, l))| {
                let mut symbols = vec![Symbol::Initial];
                symbols.extend(letters.into_iter().map(Symbol::Cluster));
                symbols.push(Symbol::Label(LabelId(l)));
                AbstractTrace { id: format!("p{i}"), symbols, rnn_label: LabelId(l), gold_label: None }
            })
            .collect();
        AbstractTraceSet { labels: LabelTable::from_names(&["N", "P"]).unwrap(), k: 3, traces }
    })
}

fn rule() -> impl Strategy<Value = MergeRule> {
    prop_oneof![Just(MergeRule::FlowConserving), Just(MergeRule::AncestorPropagating)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn learned_models_are_well_formed(ts in trace_set(), eps in prop_oneof![Just(0.01), Just(1.0), Just(64.0)], rule in rule()) {
        let cfg = LearnerConfig { epsilon: eps, merge_rule: rule, ..Default::default() };
        let l = learn(&ts, &cfg).unwrap();
        prop_assert!(l.fpt.flow_violations().is_empty());
        prop_assert!(l.pfa.validate().is_empty(), "{:?}", l.pfa.validate());
        prop_assert!(l.pfa.n_states() <= build_fpt(&ts).unwrap().arena_len());
        let seen: BTreeSet<LabelId> = ts.traces.iter().map(|t| t.rnn_label).collect();
        let accepting: BTreeSet<LabelId> = l.pfa.accepting().keys().copied().collect();
        prop_assert_eq!(seen, accepting);
        for s in 0..l.pfa.n_states() {
            let syms: Vec<Symbol> = l.pfa.outgoing(s).iter().map(|t| t.symbol).collect();
            let unique: BTreeSet<Symbol> = syms.iter().copied().collect();
            prop_assert_eq!(syms.len(), unique.len());
        }
        // learned models always terminate
        for row in ReachTable::compute(&l.pfa, ReachMethod::default()).rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-6);
        }
        // same input, same model
        let again = learn(&ts, &cfg).unwrap();
        prop_assert_eq!(format!("{:?}", again.pfa), format!("{:?}", l.pfa));
    }

    #[test]
    fn fidelity_ignores_order(ts in trace_set(), seed in any::<u64>()) {
        let p = learn(&ts, &LearnerConfig::default()).unwrap().pfa;
        let mut shuffled = ts.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::seq::SliceRandom;
        shuffled.traces.shuffle(&mut rng);
        prop_assert_eq!(fidelity(&p, &ts).unwrap(), fidelity(&p, &shuffled).unwrap());
    }

    #[test]
    fn auc_symmetry_and_monotone_invariance(
        a in prop::collection::vec(-50i32..50, 1..80),
        b in prop::collection::vec(-50i32..50, 1..80),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let x = auc(&a, &b).unwrap();
        prop_assert_eq!(x + auc(&b, &a).unwrap(), 1.0);
        let f = |v: &[f64]| v.iter().map(|x| (x / 10.0).exp() * 3.0 + 1.0).collect::<Vec<_>>();
        prop_assert_eq!(auc(&f(&a), &f(&b)).unwrap(), x);
        // brute-force pair count
        let mut twice = 0u64;
        for p in &a {
            for q in &b {
                twice += if p > q { 2 } else if p == q { 1 } else { 0 };
            }
        }
        prop_assert!((x - twice as f64 / (2 * a.len() * b.len()) as f64).abs() < 1e-12);
    }

    #[test]
    fn reach_rows_are_subdistributions(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = common::random_pfa(&mut rng, 12);
        for row in ReachTable::compute(&p, ReachMethod::default()).rows() {
            prop_assert!(row.0.iter().all(|&x| (-1e-12..=1.0 + 1e-12).contains(&x)));
            prop_assert!(row.sum() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn abstract_files_round_trip(ts in trace_set()) {
        let mut first = Vec::new();
        write_abstract_traces(&ts, &mut first).unwrap();
        let back = read_abstract_traces(&first[..]).unwrap();
        prop_assert_eq!(&back, &ts);
        let mut second = Vec::new();
        write_abstract_traces(&back, &mut second).unwrap();
        prop_assert_eq!(first, second);
    }

    #[test]
    fn bp_matches_stack(s in "[a-c()]{0,24}") {
        let mut depth = Vec::new();
        let mut ok = true;
        for c in s.chars() {
            if c == '(' {
                depth.push(());
            } else if c == ')' && depth.pop().is_none() {
                ok = false;
            }
        }
        prop_assert_eq!(pfa_extract::datasets::bp_label(&s).unwrap(), ok && depth.is_empty());
    }
}
