//! Model-quality and classification metrics.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformance::{Aligner, ConformanceError};
use crate::log::{Activity, EventLog};
use crate::petri::PetriNet;
use crate::state::StateId;

/// Floor applied to zero denominators in [`compute_sep`].
pub const SEP_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("fitness matrix has no usable entries")]
    EmptyMatrix,
    #[error("separation needs at least two states")]
    SingleState,
    #[error("empty input")]
    EmptyInput,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("state {0} has no threshold")]
    MissingThreshold(StateId),
    #[error("score set is empty")]
    EmptyScores,
    #[error(transparent)]
    Conformance(#[from] ConformanceError),
    #[error(transparent)]
    Petri(#[from] crate::petri::PetriError),
}

/// Identifies one log-against-net fitness value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FitnessKey {
    /// Device whose log is replayed.
    pub log_device: String,
    /// Device whose net is replayed on.
    pub net_device: String,
    pub log_state: StateId,
    pub net_state: StateId,
}

/// Log fitness values across devices and states.
///
/// Entries are absent where the log or the net does not exist.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitnessMatrix {
    entries: BTreeMap<FitnessKey, f64>,
}

impl FitnessMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, log_device: &str, net_device: &str, log_state: StateId, net_state: StateId, value: f64) {
        let key = FitnessKey { log_device: log_device.into(), net_device: net_device.into(), log_state, net_state };
        self.entries.insert(key, value);
    }

    pub fn get(&self, log_device: &str, net_device: &str, log_state: StateId, net_state: StateId) -> Option<f64> {
        let key = FitnessKey { log_device: log_device.into(), net_device: net_device.into(), log_state, net_state };
        self.entries.get(&key).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FitnessKey, f64)> {
        self.entries.iter().map(|(k, v)| (k, *v))
    }

    /// Multiply every value by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        FitnessMatrix { entries: self.entries.iter().map(|(k, v)| (k.clone(), v * c)).collect() }
    }
}

/// A metric value with bookkeeping about guarded terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    /// Terms that were averaged.
    pub terms: usize,
    /// Terms hitting a zero denominator (zero-mean terms for sim, clamped
    /// ratios for sep).
    pub guarded: usize,
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Inter-device similarity: one minus the mean coefficient of variation of
/// each device's state log fitness across all devices' nets of that state.
///
/// A `(state, device)` term needs the device's log and at least one net; a
/// term whose mean fitness is 0 contributes 0. States are weighted equally,
/// devices equally within a state.
pub fn compute_sim(f: &FitnessMatrix, devices: &[String], states: &[StateId]) -> Result<Metric, EvalError> {
    let mut per_state = Vec::new();
    let (mut terms, mut guarded) = (0, 0);
    for &s in states {
        let mut state_terms = Vec::new();
        for di in devices {
            let values: Vec<f64> = devices.iter().filter_map(|dj| f.get(di, dj, s, s)).collect();
            if values.is_empty() {
                continue;
            }
            let (m, sd) = mean_std(&values);
            if m > 0.0 {
                state_terms.push(1.0 - sd / m);
            } else {
                state_terms.push(0.0);
                guarded += 1;
            }
        }
        if !state_terms.is_empty() {
            terms += state_terms.len();
            per_state.push(mean(&state_terms));
        }
    }
    if per_state.is_empty() {
        return Err(EvalError::EmptyMatrix);
    }
    Ok(Metric { value: mean(&per_state), terms, guarded })
}

/// Inter-state separation: how much better each device's state log fits its
/// own net of that state than its nets of the other states.
///
/// Both fitness values of a ratio replay the outer state's log. Zero
/// denominators are clamped to [`SEP_EPSILON`].
pub fn compute_sep(f: &FitnessMatrix, devices: &[String], states: &[StateId]) -> Result<Metric, EvalError> {
    if states.len() < 2 {
        return Err(EvalError::SingleState);
    }
    let mut per_state = Vec::new();
    let (mut terms, mut guarded) = (0, 0);
    for &s in states {
        let mut state_terms = Vec::new();
        for di in devices {
            let Some(own) = f.get(di, di, s, s) else { continue };
            let ratios: Vec<f64> = states
                .iter()
                .filter(|&&sj| sj != s)
                .filter_map(|&sj| f.get(di, di, s, sj))
                .map(|cross| {
                    if cross > 0.0 {
                        own / cross
                    } else {
                        guarded += 1;
                        own / SEP_EPSILON
                    }
                })
                .collect();
            if !ratios.is_empty() {
                state_terms.push(mean(&ratios) - 1.0);
            }
        }
        if !state_terms.is_empty() {
            terms += state_terms.len();
            per_state.push(mean(&state_terms));
        }
    }
    if per_state.is_empty() {
        return Err(EvalError::EmptyMatrix);
    }
    Ok(Metric { value: mean(&per_state), terms, guarded })
}

/// Mean of `1 - arc_degree` over the given nets.
pub fn compute_comp<'a>(nets: impl IntoIterator<Item = &'a PetriNet>) -> Result<f64, EvalError> {
    let values = nets.into_iter().map(|n| n.arc_degree().map(|a| 1.0 - a)).collect::<Result<Vec<f64>, _>>()?;
    if values.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(mean(&values))
}

/// Per-state fitness thresholds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub values: BTreeMap<StateId, f64>,
    /// States left without a threshold because their validation log was
    /// empty or no net exists for them.
    pub excluded: Vec<StateId>,
}

/// Mean trace fitness of each state's validation log on that state's net.
pub fn calibrate_thresholds(
    validation: &BTreeMap<StateId, EventLog>,
    aligners: &BTreeMap<StateId, Aligner>,
    states: impl IntoIterator<Item = StateId>,
) -> Result<Thresholds, EvalError> {
    let mut out = Thresholds::default();
    for s in states {
        match (validation.get(&s).filter(|l| !l.is_empty()), aligners.get(&s)) {
            (Some(log), Some(aligner)) => {
                out.values.insert(s, aligner.log_fitness(log)?);
            }
            _ => out.excluded.push(s),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Classification {
    Positive(StateId),
    Unknown,
}

/// Trained artifacts of one device: one net and one threshold per state.
#[derive(Debug, Clone)]
pub struct ClassifierModel {
    pub preprocessing: crate::pipeline::Preprocessing,
    pub nets: BTreeMap<StateId, crate::pipeline::StateNet>,
    pub aligners: BTreeMap<StateId, Aligner>,
    pub thresholds: Thresholds,
}

impl ClassifierModel {
    pub fn threshold(&self, state: StateId) -> Option<f64> {
        self.thresholds.values.get(&state).copied()
    }

    pub fn trace_fitness(&self, state: StateId, trace: &[Activity]) -> Result<f64, EvalError> {
        let aligner = self.aligners.get(&state).ok_or(EvalError::MissingThreshold(state))?;
        Ok(aligner.trace_fitness(trace)?)
    }
}

/// Positive iff `fitness >= threshold`.
pub fn classify_fitness(fitness: f64, threshold: f64, state: StateId) -> Classification {
    if fitness >= threshold {
        Classification::Positive(state)
    } else {
        Classification::Unknown
    }
}

pub fn classify_trace(trace: &[Activity], state: StateId, model: &ClassifierModel) -> Result<Classification, EvalError> {
    let t = model.threshold(state).ok_or(EvalError::MissingThreshold(state))?;
    Ok(classify_fitness(model.trace_fitness(state, trace)?, t, state))
}

/// Memoizing trace classifier; states without a threshold classify as
/// unknown.
#[derive(Debug)]
pub struct TraceClassifier<'a> {
    model: &'a ClassifierModel,
    memo: BTreeMap<(StateId, Vec<Activity>), Classification>,
}

impl<'a> TraceClassifier<'a> {
    pub fn new(model: &'a ClassifierModel) -> Self {
        TraceClassifier { model, memo: BTreeMap::new() }
    }

    pub fn model(&self) -> &'a ClassifierModel {
        self.model
    }

    pub fn classify(&mut self, state: StateId, trace: &[Activity]) -> Result<Classification, EvalError> {
        if let Some(c) = self.memo.get(&(state, trace.to_vec())) {
            return Ok(*c);
        }
        let c = match classify_trace(trace, state, self.model) {
            Err(EvalError::MissingThreshold(_)) => Classification::Unknown,
            other => other?,
        };
        self.memo.insert((state, trace.to_vec()), c);
        Ok(c)
    }
}

/// Distribution over states `1..=k` followed by the unknown outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePmf {
    /// `probabilities[i]` is state `i + 1` for `i < k`; the last entry is
    /// the unknown outcome.
    pub probabilities: Vec<f64>,
}

impl StatePmf {
    pub fn k(&self) -> usize {
        self.probabilities.len() - 1
    }

    pub fn state(&self, s: StateId) -> f64 {
        self.probabilities[s.index()]
    }

    pub fn unknown(&self) -> f64 {
        self.probabilities[self.k()]
    }
}

pub fn build_pmf(classifications: &[Classification], k: usize) -> Result<StatePmf, EvalError> {
    if classifications.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut counts = vec![0usize; k + 1];
    for c in classifications {
        match c {
            Classification::Positive(s) if s.index() < k => counts[s.index()] += 1,
            Classification::Positive(s) => return Err(EvalError::DimensionMismatch(s.index() + 1, k)),
            Classification::Unknown => counts[k] += 1,
        }
    }
    let n = classifications.len() as f64;
    Ok(StatePmf { probabilities: counts.iter().map(|c| *c as f64 / n).collect() })
}

fn same_len(p: &StatePmf, q: &StatePmf) -> Result<(), EvalError> {
    if p.probabilities.len() != q.probabilities.len() {
        return Err(EvalError::DimensionMismatch(p.probabilities.len(), q.probabilities.len()));
    }
    Ok(())
}

/// Sum of elementwise minima.
pub fn pmf_intersection(p: &StatePmf, q: &StatePmf) -> Result<f64, EvalError> {
    same_len(p, q)?;
    Ok(p.probabilities.iter().zip(&q.probabilities).map(|(a, b)| a.min(*b)).sum())
}

pub fn pmf_cosine(p: &StatePmf, q: &StatePmf) -> Result<f64, EvalError> {
    same_len(p, q)?;
    let dot: f64 = p.probabilities.iter().zip(&q.probabilities).map(|(a, b)| a * b).sum();
    let norm = |v: &[f64]| libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    let denom = norm(&p.probabilities) * norm(&q.probabilities);
    Ok(if denom > 0.0 { dot / denom } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// From `(0, 0)` at an infinite threshold to `(1, 1)`.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    /// Area under the curve by the trapezoidal rule.
    pub fn trapezoid_area(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum()
    }
}

/// ROC of the rule "positive iff score >= threshold" swept over every
/// distinct score. The AUC is the probability that a positive outscores a
/// negative, ties counting one half.
pub fn roc_auc(positives: &[f64], negatives: &[f64]) -> Result<RocCurve, EvalError> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(EvalError::EmptyScores);
    }
    let mut thresholds: Vec<f64> = positives.iter().chain(negatives).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let (np, nn) = (positives.len() as f64, negatives.len() as f64);
    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    for &t in &thresholds {
        let tp = positives.iter().filter(|s| **s >= t).count() as f64;
        let fp = negatives.iter().filter(|s| **s >= t).count() as f64;
        points.push(RocPoint { threshold: t, fpr: fp / nn, tpr: tp / np });
    }
    let mut wins = 0.0;
    for p in positives {
        for n in negatives {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Ok(RocCurve { points, auc: wins / (np * nn) })
}
