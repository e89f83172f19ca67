//! End-to-end glue: records to windows to states to per-state logs and nets.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformance::{Aligner, ConformanceError, CostScheme};
use crate::discovery::{inductive_miner, tree_to_petri, ProcessTree};
use crate::eval::{calibrate_thresholds, ClassifierModel, EvalError, TraceClassifier};
use crate::log::{extract_event_logs, variant_filter, Activity, EventLog, LogError};
use crate::packet::PacketRecord;
use crate::petri::PetriNet;
use crate::state::{align_states, fit_kmeans, KMeansParams, StateError, StateId, StateModel, Standardization};
use crate::window::{extract_windows, WindowConfig, WindowError, WindowStats};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Conformance(#[from] ConformanceError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid segment fraction {0}")]
    InvalidSegmentFraction(f64),
}

/// Parameters shared by every stage after capture decoding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelingParams {
    pub window_length: usize,
    pub k: usize,
    pub seed: u64,
    pub noise_threshold: f64,
    /// Variant filter applied before discovery; 1.0 disables it.
    pub keep_fraction: f64,
    #[serde(skip, default)]
    pub costs: CostScheme,
}

impl ModelingParams {
    pub fn new(window_length: usize, k: usize, seed: u64) -> Self {
        ModelingParams {
            window_length,
            k,
            seed,
            noise_threshold: crate::discovery::DEFAULT_NOISE_THRESHOLD,
            keep_fraction: 1.0,
            costs: CostScheme::default(),
        }
    }
}

/// Windowing, standardization and clustering parameters fitted on one
/// reference device and reused for every other device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub window_length: usize,
    pub standardization: Standardization,
    pub state_model: StateModel,
}

impl Preprocessing {
    pub fn fit(records: &[PacketRecord], window_length: usize, k: usize, seed: u64) -> Result<Self, PipelineError> {
        let cfg = WindowConfig::new(window_length)?;
        let windows = extract_windows(records, cfg);
        let standardization = Standardization::fit_windows(&windows)?;
        let z = standardization.apply_windows(&windows)?;
        let state_model = fit_kmeans(&z, KMeansParams::new(k, seed))?;
        Ok(Preprocessing { window_length, standardization, state_model })
    }

    pub fn k(&self) -> usize {
        self.state_model.k
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        self.state_model.states()
    }

    pub fn window_config(&self) -> WindowConfig {
        WindowConfig::new(self.window_length).expect("validated at fit time")
    }

    /// Windows of `records` with their assigned states.
    pub fn assign(&self, records: &[PacketRecord]) -> Result<(Vec<WindowStats>, Vec<StateId>), PipelineError> {
        let windows = extract_windows(records, self.window_config());
        if windows.is_empty() {
            return Ok((windows, Vec::new()));
        }
        let z = self.standardization.apply_windows(&windows)?;
        let states = self.state_model.assign_all(&z)?;
        Ok((windows, states))
    }

    /// One event log per state, every state present (possibly empty).
    pub fn state_logs(&self, device: &str, records: &[PacketRecord]) -> Result<BTreeMap<StateId, EventLog>, PipelineError> {
        let (windows, states) = self.assign(records)?;
        let labeled = align_states(records.len(), &windows, &states, self.window_length)?;
        Ok(extract_event_logs(device, records, &labeled, self.k()))
    }

    /// `(state, events)` of each window, in capture order.
    pub fn traces(&self, records: &[PacketRecord]) -> Result<Vec<(StateId, Vec<Activity>)>, PipelineError> {
        let (windows, states) = self.assign(records)?;
        Ok(windows
            .iter()
            .zip(states)
            .map(|(w, s)| {
                let events = records[w.first_packet..w.first_packet + self.window_length].iter().map(Activity::of_packet);
                (s, events.collect())
            })
            .collect())
    }
}

/// A discovered model of one state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateNet {
    pub tree: ProcessTree,
    pub net: PetriNet,
}

/// Mine one net per non-empty state log.
pub fn discover_state_nets(
    logs: &BTreeMap<StateId, EventLog>,
    noise_threshold: f64,
    keep_fraction: f64,
) -> Result<BTreeMap<StateId, StateNet>, PipelineError> {
    let mut out = BTreeMap::new();
    for (s, log) in logs {
        if log.is_empty() {
            continue;
        }
        let filtered;
        let log = if keep_fraction < 1.0 {
            filtered = variant_filter(log, keep_fraction)?;
            &filtered
        } else {
            log
        };
        let tree = inductive_miner(log, noise_threshold);
        let net = tree_to_petri(&tree);
        out.insert(*s, StateNet { tree, net });
    }
    Ok(out)
}

pub fn build_aligners(
    nets: &BTreeMap<StateId, StateNet>,
    costs: CostScheme,
) -> Result<BTreeMap<StateId, Aligner>, PipelineError> {
    nets.iter().map(|(s, n)| Ok((*s, Aligner::new(&n.net, costs)?))).collect()
}

/// Concatenate logs state by state.
pub fn merge_logs<'a>(k: usize, parts: impl IntoIterator<Item = &'a BTreeMap<StateId, EventLog>>) -> BTreeMap<StateId, EventLog> {
    let mut out: BTreeMap<StateId, EventLog> = (0..k).map(StateId::from_index).map(|s| (s, EventLog::new(s))).collect();
    for part in parts {
        for (s, log) in part {
            out.entry(*s).or_insert_with(|| EventLog::new(*s)).traces.extend(log.traces.iter().cloned());
        }
    }
    out
}

/// Fit preprocessing and nets on `train`, thresholds on the pooled
/// validation devices.
pub fn train_classifier(
    train: &[PacketRecord],
    validation: &[(&str, &[PacketRecord])],
    params: &ModelingParams,
) -> Result<ClassifierModel, PipelineError> {
    let preprocessing = Preprocessing::fit(train, params.window_length, params.k, params.seed)?;
    let logs = preprocessing.state_logs("train", train)?;
    let nets = discover_state_nets(&logs, params.noise_threshold, params.keep_fraction)?;
    let aligners = build_aligners(&nets, params.costs)?;
    let per_device = validation.iter().map(|(d, r)| preprocessing.state_logs(d, r)).collect::<Result<Vec<_>, _>>()?;
    let pooled = merge_logs(preprocessing.k(), &per_device);
    let thresholds = calibrate_thresholds(&pooled, &aligners, preprocessing.states())?;
    Ok(ClassifierModel { preprocessing, nets, aligners, thresholds })
}

/// Unknown-rate of one capture segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentScore {
    pub first_packet: usize,
    pub packets: usize,
    pub traces: usize,
    pub unknown: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SegmentReport {
    pub scores: Vec<SegmentScore>,
    /// Segments too short to contain a window.
    pub skipped: usize,
}

/// Packets per segment: `ceil(fraction * total)`, at least one.
pub fn segment_size(total: usize, fraction: f64) -> Result<usize, PipelineError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(PipelineError::InvalidSegmentFraction(fraction));
    }
    Ok((libm::ceil(fraction * total as f64) as usize).max(1))
}

/// Split `records` into consecutive segments and score each by the share of
/// its traces classified unknown.
///
/// Windows keep the grid of their session: a segment's traces are the
/// session windows lying entirely inside it, so a segment boundary never
/// shifts where windows start.
pub fn segment_scores(
    records: &[PacketRecord],
    model: &ClassifierModel,
    segment_fraction: f64,
) -> Result<SegmentReport, PipelineError> {
    let size = segment_size(records.len(), segment_fraction)?;
    let l = model.preprocessing.window_length;
    let (windows, states) = model.preprocessing.assign(records)?;
    let mut classifier = TraceClassifier::new(model);
    let mut report = SegmentReport::default();
    let mut next = 0;
    for (i, segment) in records.chunks(size).enumerate() {
        let (start, end) = (i * size, i * size + segment.len());
        while next < windows.len() && windows[next].first_packet < start {
            next += 1;
        }
        let (mut traces, mut unknown) = (0, 0);
        while next < windows.len() && windows[next].first_packet + l <= end {
            let w = &windows[next];
            let events: Vec<Activity> = records[w.first_packet..w.first_packet + l].iter().map(Activity::of_packet).collect();
            if classifier.classify(states[next], &events)? == crate::eval::Classification::Unknown {
                unknown += 1;
            }
            traces += 1;
            next += 1;
        }
        if traces == 0 {
            report.skipped += 1;
            continue;
        }
        report.scores.push(SegmentScore {
            first_packet: start,
            packets: segment.len(),
            traces,
            unknown,
            score: unknown as f64 / traces as f64,
        });
    }
    Ok(report)
}

/// Classify every window of `records`.
pub fn classify_records(
    records: &[PacketRecord],
    classifier: &mut TraceClassifier<'_>,
) -> Result<Vec<crate::eval::Classification>, PipelineError> {
    classifier
        .model()
        .preprocessing
        .traces(records)?
        .iter()
        .map(|(s, events)| classifier.classify(*s, events).map_err(PipelineError::from))
        .collect()
}
