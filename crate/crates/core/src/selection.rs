//! Adaptive choice of the cluster count: grow K until the extracted model
//! agrees with the classifier often enough on the training traces.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::abstraction::{fit_kmeans, pooled_vectors, ClusteringFunction, KMeansConfig};
use crate::error::{Error, Result};
use crate::evaluation::fidelity;
use crate::learner::{extract_pfa, LearnerConfig};
use crate::pfa::Pfa;
use crate::trace_model::ConcreteTraceSet;

#[derive(Clone, Debug)]
pub struct SelectionConfig {
    pub gamma_a: f64,
    pub epsilon: f64,
    pub timeout: Duration,
    pub k_start: usize,
    pub k_step: usize,
    pub k_max: usize,
    pub kmeans: KMeansConfig,
    pub learner: LearnerConfig,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            gamma_a: 0.9,
            epsilon: 64.0,
            timeout: Duration::from_secs(400),
            k_start: 2,
            k_step: 1,
            k_max: 64,
            kmeans: KMeansConfig::default(),
            learner: LearnerConfig::default(),
        }
    }
}

impl SelectionConfig {
    fn check(&self) -> Result<()> {
        // targets above 1 are accepted; they simply can never be met
        if !self.gamma_a.is_finite() || self.gamma_a < 0.0 {
            return Err(Error::Config("gamma must be a non-negative number".into()));
        }
        if self.k_start == 0 || self.k_step == 0 {
            return Err(Error::Config("k_start and k_step must be at least 1".into()));
        }
        if self.k_max < self.k_start {
            return Err(Error::Config("k_max is below k_start".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectionStep {
    pub k: usize,
    pub states: usize,
    pub fidelity: f64,
    /// Wall-clock time since the loop started; left out of reports so they
    /// stay byte-identical across runs.
    #[serde(skip)]
    pub elapsed: Duration,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectionReport {
    pub chosen_k: usize,
    pub history: Vec<SelectionStep>,
    pub satisfied: bool,
}

impl SelectionStep {
    pub fn log_line(&self) -> String {
        format!("K={:<3} states={:<5} fidelity={:.4} elapsed={:.2}s", self.k, self.states, self.fidelity, self.elapsed.as_secs_f64())
    }
}

pub fn select_model(ts: &ConcreteTraceSet, cfg: &SelectionConfig) -> Result<(Pfa, ClusteringFunction, SelectionReport)> {
    select_model_with_progress(ts, cfg, |_| {})
}

/// Same as [`select_model`], calling `progress` after every K.
pub fn select_model_with_progress(
    ts: &ConcreteTraceSet,
    cfg: &SelectionConfig,
    mut progress: impl FnMut(&SelectionStep),
) -> Result<(Pfa, ClusteringFunction, SelectionReport)> {
    cfg.check()?;
    if ts.is_empty() {
        return Err(Error::Empty("model selection needs at least one trace"));
    }
    let start = Instant::now();
    let vectors = pooled_vectors(ts);
    let learner = LearnerConfig { epsilon: cfg.epsilon, ..cfg.learner.clone() };
    let mut history = Vec::new();
    let mut last: Option<(Pfa, ClusteringFunction)> = None;
    let mut k = cfg.k_start;
    let mut satisfied = false;
    loop {
        let cf = match fit_kmeans(&vectors, k, &cfg.kmeans) {
            Ok(cf) => cf,
            // ran out of distinct points: keep the last model
            Err(Error::TooFewPoints { .. }) if last.is_some() => break,
            Err(e) => return Err(e),
        };
        let abs = cf.abstract_all_with(ts, cfg.kmeans.exec)?;
        let pfa = extract_pfa(&abs, &learner)?;
        let rho = fidelity(&pfa, &abs)?;
        let step = SelectionStep { k, states: pfa.n_states(), fidelity: rho, elapsed: start.elapsed() };
        progress(&step);
        history.push(step);
        last = Some((pfa, cf));
        if rho >= cfg.gamma_a {
            satisfied = true;
            break;
        }
        if start.elapsed() >= cfg.timeout || k + cfg.k_step > cfg.k_max {
            break;
        }
        k += cfg.k_step;
    }
    let (pfa, cf) = last.expect("at least one K was tried");
    let chosen_k = cf.k();
    Ok((pfa, cf, SelectionReport { chosen_k, history, satisfied }))
}
