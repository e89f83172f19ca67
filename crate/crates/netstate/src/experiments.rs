//! Grid experiments: cross-device similarity/separation/complexity and
//! foreign-traffic classification.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use netstate_core::conformance::Aligner;
use netstate_core::eval::{
    build_pmf, compute_comp, compute_sep, compute_sim, pmf_cosine, pmf_intersection, roc_auc, Classification,
    FitnessMatrix, RocCurve, StatePmf, TraceClassifier,
};
use netstate_core::log::EventLog;
use netstate_core::packet::PacketRecord;
use netstate_core::pipeline::{
    build_aligners, classify_records, discover_state_nets, segment_scores, train_classifier, ModelingParams,
    PipelineError, Preprocessing, SegmentScore, StateNet,
};
use netstate_core::state::StateId;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{load_devices, ConfigError, LoadedDevice, RunConfig};
use crate::logio::state_model_json;
use crate::pnml::pnml_bytes;
use crate::report::{
    cell_dir, classification_csv, heatmap_csv, roc_csv, Exp1Cell, Exp2Cell, OutputDir, PmfDoc, ReportError,
    CLASSIFICATION_FILE, HEATMAP_FILE,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("window length {window_length}, k {k}: {source}")]
    Cell { window_length: usize, k: usize, source: PipelineError },
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Results plus the warnings to surface on standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome<T> {
    pub cells: Vec<T>,
    pub warnings: Vec<String>,
}

fn params(cfg: &RunConfig, window_length: usize, k: usize) -> ModelingParams {
    ModelingParams {
        noise_threshold: cfg.noise_threshold,
        keep_fraction: cfg.keep_fraction,
        ..ModelingParams::new(window_length, k, cfg.seed)
    }
}

fn grid(cfg: &RunConfig) -> Vec<(usize, usize)> {
    cfg.window_lengths.iter().flat_map(|l| cfg.ks.iter().map(move |k| (*l, *k))).collect()
}

/// Run `f` on a pool of `workers` threads (0 = one per CPU).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, ExperimentError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| ExperimentError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Fitness of one device's state logs under one rotation.
struct DeviceModels {
    logs: BTreeMap<StateId, EventLog>,
    nets: BTreeMap<StateId, StateNet>,
    aligners: BTreeMap<StateId, Aligner>,
}

/// One reference rotation of a similarity cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Exp1Rotation {
    pub reference: String,
    pub sim: netstate_core::eval::Metric,
    pub sep: netstate_core::eval::Metric,
    pub comp: f64,
    pub fitness: FitnessMatrix,
}

/// Preprocessing fitted on `reference`; nets and logs of every other device.
pub fn exp1_rotation(
    reference: &LoadedDevice,
    others: &[&LoadedDevice],
    p: &ModelingParams,
) -> Result<Exp1Rotation, PipelineError> {
    let pre = Preprocessing::fit(&reference.records, p.window_length, p.k, p.seed)?;
    let models = others
        .par_iter()
        .map(|d| {
            let logs = pre.state_logs(&d.id, &d.records)?;
            let nets = discover_state_nets(&logs, p.noise_threshold, p.keep_fraction)?;
            let aligners = build_aligners(&nets, p.costs)?;
            Ok(DeviceModels { logs, nets, aligners })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let states: Vec<StateId> = pre.states().collect();
    // (log device, net device, log state, net state) pairs used by sim and sep
    let mut jobs = Vec::new();
    for (i, mi) in models.iter().enumerate() {
        for (s, log) in mi.logs.iter().filter(|(_, l)| !l.is_empty()) {
            for (j, mj) in models.iter().enumerate() {
                if mj.aligners.contains_key(s) {
                    jobs.push((i, j, *s, *s, log));
                }
            }
            for sj in states.iter().filter(|sj| *sj != s && mi.aligners.contains_key(sj)) {
                jobs.push((i, i, *s, *sj, log));
            }
        }
    }
    let values = jobs
        .par_iter()
        .map(|(_, j, _, sj, log)| models[*j].aligners[sj].log_fitness(log).map_err(PipelineError::from))
        .collect::<Result<Vec<f64>, _>>()?;
    let mut fitness = FitnessMatrix::new();
    for ((i, j, s, sj, _), v) in jobs.iter().zip(values) {
        fitness.insert(&others[*i].id, &others[*j].id, *s, *sj, v);
    }
    let ids: Vec<String> = others.iter().map(|d| d.id.clone()).collect();
    let sim = compute_sim(&fitness, &ids, &states).map_err(PipelineError::from)?;
    let sep = compute_sep(&fitness, &ids, &states).map_err(PipelineError::from)?;
    let comp = compute_comp(models.iter().flat_map(|m| m.nets.values().map(|n| &n.net))).map_err(PipelineError::from)?;
    Ok(Exp1Rotation { reference: reference.id.clone(), sim, sep, comp, fitness })
}

/// Every device serves once as the reference; metrics are averaged over
/// the rotations.
pub fn exp1_cell(devices: &[LoadedDevice], p: &ModelingParams) -> Result<(Exp1Cell, Vec<Exp1Rotation>), PipelineError> {
    let rotations = (0..devices.len())
        .into_par_iter()
        .map(|r| {
            let others: Vec<&LoadedDevice> = devices.iter().enumerate().filter(|(i, _)| *i != r).map(|(_, d)| d).collect();
            exp1_rotation(&devices[r], &others, p)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n = rotations.len() as f64;
    let cell = Exp1Cell {
        window_length: p.window_length,
        k: p.k,
        sim: rotations.iter().map(|r| r.sim.value).sum::<f64>() / n,
        sep: rotations.iter().map(|r| r.sep.value).sum::<f64>() / n,
        comp: rotations.iter().map(|r| r.comp).sum::<f64>() / n,
        references: rotations.iter().map(|r| r.reference.clone()).collect(),
        sim_guarded_terms: rotations.iter().map(|r| r.sim.guarded).sum(),
        sep_clamped_terms: rotations.iter().map(|r| r.sep.guarded).sum(),
    };
    Ok((cell, rotations))
}

fn fitness_csv(rotations: &[Exp1Rotation]) -> Vec<u8> {
    let mut out = String::from("reference,log_device,net_device,log_state,net_state,fitness\n");
    for r in rotations {
        for (key, v) in r.fitness.iter() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{v}",
                r.reference, key.log_device, key.net_device, key.log_state, key.net_state
            );
        }
    }
    out.into_bytes()
}

/// Similarity experiment over already loaded devices.
pub fn experiment1(cfg: &RunConfig, devices: &[LoadedDevice], out: &OutputDir) -> Result<Outcome<Exp1Cell>, ExperimentError> {
    let results = grid(cfg)
        .into_par_iter()
        .map(|(l, k)| {
            exp1_cell(devices, &params(cfg, l, k)).map_err(|source| ExperimentError::Cell { window_length: l, k, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut warnings = Vec::new();
    let mut cells = Vec::new();
    for (cell, rotations) in results {
        let dir = cell_dir("exp1", cell.window_length, cell.k);
        if cell.sim_guarded_terms > 0 {
            warnings.push(format!("{}: {} sim terms had zero mean fitness", dir.display(), cell.sim_guarded_terms));
        }
        if cell.sep_clamped_terms > 0 {
            warnings.push(format!("{}: {} sep ratios clamped a zero denominator", dir.display(), cell.sep_clamped_terms));
        }
        out.write(dir.join("fitness.csv"), &fitness_csv(&rotations))?;
        out.write_json(dir.join("summary.json"), &cell)?;
        cells.push(cell);
    }
    out.write(HEATMAP_FILE, &heatmap_csv(&cells))?;
    Ok(Outcome { cells, warnings })
}

/// Load the configured devices and run the similarity experiment.
pub fn run_experiment1(cfg: &RunConfig, out: &OutputDir) -> Result<Outcome<Exp1Cell>, ExperimentError> {
    cfg.validate_exp1()?;
    with_workers(cfg.workers, || {
        let devices = load_devices(cfg, &cfg.exp1_device_ids())?;
        let mut warnings = load_warnings(&devices);
        let mut o = experiment1(cfg, &devices, out)?;
        warnings.append(&mut o.warnings);
        o.warnings = warnings;
        Ok(o)
    })?
}

fn load_warnings(devices: &[LoadedDevice]) -> Vec<String> {
    let mut w = Vec::new();
    for d in devices {
        if d.timestamp_regressions > 0 {
            w.push(format!("device {}: {} timestamp regressions within sessions", d.id, d.timestamp_regressions));
        }
        if d.skipped_frames > 0 {
            w.push(format!("device {}: skipped {} non-IPv4/TCP frames", d.id, d.skipped_frames));
        }
    }
    w
}

/// Segment scores of one test device.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSegments {
    pub device: String,
    pub foreign: bool,
    pub scores: Vec<SegmentScore>,
    pub skipped: usize,
}

/// Everything computed for one classification cell.
#[derive(Debug, Clone)]
pub struct Exp2Result {
    pub cell: Exp2Cell,
    pub model: netstate_core::eval::ClassifierModel,
    pub pmf_own: StatePmf,
    pub pmf_foreign: StatePmf,
    pub roc: RocCurve,
    pub segments: Vec<DeviceSegments>,
}

/// Devices by role for the classification experiment.
#[derive(Debug, Clone, Copy)]
pub struct RoleSplit<'a> {
    pub train: &'a LoadedDevice,
    pub validation: &'a [LoadedDevice],
    pub test_own: &'a [LoadedDevice],
    pub test_foreign: &'a [LoadedDevice],
}

fn test_device(
    d: &LoadedDevice,
    foreign: bool,
    model: &netstate_core::eval::ClassifierModel,
    segment_fraction: f64,
) -> Result<(DeviceSegments, Vec<Classification>), PipelineError> {
    let report = segment_scores(&d.records, model, segment_fraction)?;
    let mut classifier = TraceClassifier::new(model);
    let classes = classify_records(&d.records, &mut classifier)?;
    Ok((DeviceSegments { device: d.id.clone(), foreign, scores: report.scores, skipped: report.skipped }, classes))
}

pub fn exp2_cell(roles: RoleSplit<'_>, p: &ModelingParams, segment_fraction: f64) -> Result<Exp2Result, PipelineError> {
    let validation: Vec<(&str, &[PacketRecord])> =
        roles.validation.iter().map(|d| (d.id.as_str(), d.records.as_slice())).collect();
    let model = train_classifier(&roles.train.records, &validation, p)?;
    let tests: Vec<(&LoadedDevice, bool)> =
        roles.test_own.iter().map(|d| (d, false)).chain(roles.test_foreign.iter().map(|d| (d, true))).collect();
    let results = tests
        .par_iter()
        .map(|(d, foreign)| test_device(d, *foreign, &model, segment_fraction))
        .collect::<Result<Vec<_>, _>>()?;
    let k = model.preprocessing.k();
    let (mut own_cls, mut foreign_cls) = (Vec::new(), Vec::new());
    let (mut own_scores, mut foreign_scores) = (Vec::new(), Vec::new());
    let mut segments = Vec::new();
    for (seg, cls) in results {
        let (c, s) = if seg.foreign { (&mut foreign_cls, &mut foreign_scores) } else { (&mut own_cls, &mut own_scores) };
        c.extend(cls);
        s.extend(seg.scores.iter().map(|x| x.score));
        segments.push(seg);
    }
    let pmf_own = build_pmf(&own_cls, k).map_err(PipelineError::from)?;
    let pmf_foreign = build_pmf(&foreign_cls, k).map_err(PipelineError::from)?;
    let roc = roc_auc(&foreign_scores, &own_scores).map_err(PipelineError::from)?;
    let cell = Exp2Cell {
        window_length: p.window_length,
        k,
        intersection: pmf_intersection(&pmf_own, &pmf_foreign).map_err(PipelineError::from)?,
        cosine_similarity: pmf_cosine(&pmf_own, &pmf_foreign).map_err(PipelineError::from)?,
        auc: roc.auc,
        own_segments: own_scores.len(),
        foreign_segments: foreign_scores.len(),
        skipped_segments: segments.iter().map(|s| s.skipped).sum(),
        thresholds: model.preprocessing.states().map(|s| model.threshold(s)).collect(),
    };
    Ok(Exp2Result { cell, model, pmf_own, pmf_foreign, roc, segments })
}

fn segments_csv(segments: &[DeviceSegments]) -> Vec<u8> {
    let mut out = String::from("device,foreign,first_packet,packets,traces,unknown,score\n");
    for d in segments {
        for s in &d.scores {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                d.device, d.foreign, s.first_packet, s.packets, s.traces, s.unknown, s.score
            );
        }
    }
    out.into_bytes()
}

fn trees_text(nets: &BTreeMap<StateId, StateNet>) -> String {
    nets.iter().map(|(s, n)| format!("{s}\t{}\n", n.tree)).collect()
}

fn write_exp2_cell(r: &Exp2Result, out: &OutputDir) -> Result<(), ReportError> {
    let dir = cell_dir("exp2", r.cell.window_length, r.cell.k);
    out.write(dir.join("state_model.json"), state_model_json(&r.model.preprocessing).as_bytes())?;
    out.write(dir.join("trees.txt"), trees_text(&r.model.nets).as_bytes())?;
    for (s, n) in &r.model.nets {
        out.write(dir.join(format!("net_state{s}.pnml")), &pnml_bytes(&n.net))?;
    }
    out.write_json(dir.join("pmf_own.json"), &PmfDoc::from(&r.pmf_own))?;
    out.write_json(dir.join("pmf_foreign.json"), &PmfDoc::from(&r.pmf_foreign))?;
    out.write(dir.join("roc.csv"), &roc_csv(&r.roc))?;
    out.write(dir.join("segments.csv"), &segments_csv(&r.segments))?;
    out.write_json(dir.join("summary.json"), &r.cell)?;
    Ok(())
}

/// Classification experiment over already loaded devices.
pub fn experiment2(cfg: &RunConfig, roles: RoleSplit<'_>, out: &OutputDir) -> Result<Outcome<Exp2Result>, ExperimentError> {
    let results = grid(cfg)
        .into_par_iter()
        .map(|(l, k)| {
            exp2_cell(roles, &params(cfg, l, k), cfg.segment_fraction)
                .map_err(|source| ExperimentError::Cell { window_length: l, k, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut warnings = Vec::new();
    for r in &results {
        let dir = cell_dir("exp2", r.cell.window_length, r.cell.k);
        for s in &r.model.thresholds.excluded {
            warnings.push(format!("{}: state {s} has no threshold; its traces count as unknown", dir.display()));
        }
        if r.cell.skipped_segments > 0 {
            warnings.push(format!("{}: skipped {} segments without a complete window", dir.display(), r.cell.skipped_segments));
        }
        write_exp2_cell(r, out)?;
    }
    let cells: Vec<Exp2Cell> = results.iter().map(|r| r.cell.clone()).collect();
    out.write(CLASSIFICATION_FILE, &classification_csv(&cells))?;
    Ok(Outcome { cells: results, warnings })
}

/// Load the role devices and run the classification experiment.
pub fn run_experiment2(cfg: &RunConfig, out: &OutputDir) -> Result<Outcome<Exp2Result>, ExperimentError> {
    cfg.validate_exp2()?;
    let r = &cfg.roles;
    with_workers(cfg.workers, || {
        let train = load_devices(cfg, std::slice::from_ref(r.train.as_ref().expect("validated")))?;
        let validation = load_devices(cfg, &r.validation)?;
        let test_own = load_devices(cfg, &r.test_own)?;
        let test_foreign = load_devices(cfg, &r.test_foreign)?;
        let mut warnings = Vec::new();
        for group in [&train, &validation, &test_own, &test_foreign] {
            warnings.extend(load_warnings(group));
        }
        let roles = RoleSplit { train: &train[0], validation: &validation, test_own: &test_own, test_foreign: &test_foreign };
        let mut o = experiment2(cfg, roles, out)?;
        warnings.append(&mut o.warnings);
        o.warnings = warnings;
        Ok(o)
    })?
}
