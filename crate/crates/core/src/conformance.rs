//! Optimal alignments of traces against workflow nets.
//!
//! The search runs over the synchronous product of the trace and the net:
//! a state is a marking plus a position in the trace. Dijkstra's algorithm
//! settles states in order of (cost, log moves, move count, move sequence),
//! which makes the returned alignment unique for a given input.

use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap};
use alloc::fmt;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};
use core::fmt::Write as _;

use thiserror::Error;

use crate::log::{Activity, EventLog, Variant};
use crate::petri::{PetriNet, PlaceId, TransitionId};

/// Expansion cap applied when none is configured.
pub const DEFAULT_MAX_EXPANSIONS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConformanceError {
    #[error("alignment search exceeded {0} state expansions")]
    SearchBudgetExceeded(usize),
    #[error("event log is empty")]
    EmptyLog,
    #[error("final marking is unreachable")]
    Unreachable,
    #[error("invalid cost scheme: {0}")]
    InvalidCosts(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostScheme {
    pub sync_cost: f64,
    pub silent_cost: f64,
    pub log_move_cost: f64,
    pub model_move_cost: f64,
}

impl Default for CostScheme {
    fn default() -> Self {
        CostScheme { sync_cost: 0.0, silent_cost: 0.0, log_move_cost: 1.0, model_move_cost: 1.0 }
    }
}

impl CostScheme {
    pub fn validate(&self) -> Result<(), ConformanceError> {
        let all = [self.sync_cost, self.silent_cost, self.log_move_cost, self.model_move_cost];
        if all.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(ConformanceError::InvalidCosts("costs must be finite and non-negative"));
        }
        if self.sync_cost > self.log_move_cost.min(self.model_move_cost) {
            return Err(ConformanceError::InvalidCosts("sync cost exceeds a move cost"));
        }
        Ok(())
    }
}

/// One step of an alignment.
///
/// The derived order (variant first, then transition) is the tie-break
/// between otherwise equal alignments.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Move {
    Sync { transition: TransitionId, label: Activity },
    LogOnly { label: Activity },
    ModelOnly { transition: TransitionId, label: Activity },
    ModelSilent { transition: TransitionId },
}

impl Move {
    pub fn transition(&self) -> Option<TransitionId> {
        match self {
            Move::Sync { transition, .. } | Move::ModelOnly { transition, .. } | Move::ModelSilent { transition } => {
                Some(*transition)
            }
            Move::LogOnly { .. } => None,
        }
    }

    /// Event consumed from the trace, if any.
    pub fn log_label(&self) -> Option<&Activity> {
        match self {
            Move::Sync { label, .. } | Move::LogOnly { label } => Some(label),
            _ => None,
        }
    }
}

/// `s(a)`, `l(a)`, `m(a)` and `t(<transition id>)` for silent steps.
impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Move::Sync { label, .. } => write!(f, "s({label})"),
            Move::LogOnly { label } => write!(f, "l({label})"),
            Move::ModelOnly { label, .. } => write!(f, "m({label})"),
            Move::ModelSilent { transition } => write!(f, "t({})", transition.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub moves: Vec<Move>,
    pub total_cost: f64,
}

impl Alignment {
    /// Moves joined by `|`.
    pub fn compact(&self) -> String {
        let mut out = String::new();
        for (i, m) in self.moves.iter().enumerate() {
            if i > 0 {
                out.push('|');
            }
            let _ = write!(out, "{m}");
        }
        out
    }

    pub fn sync_moves(&self) -> usize {
        self.moves.iter().filter(|m| matches!(m, Move::Sync { .. })).count()
    }
}

/// Alignment result for one distinct trace of a log.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantFitness {
    pub events: Vec<Activity>,
    pub frequency: usize,
    pub alignment: Alignment,
    pub fitness: f64,
}

#[derive(Debug, Clone)]
struct Step {
    preset: Vec<usize>,
    postset: Vec<usize>,
    label: Option<Activity>,
}

/// Alignment engine bound to one net and one cost scheme.
///
/// Holds the net in a dense form together with the cost of its cheapest
/// model-only run, so repeated alignments against the same net share that
/// work. The engine is immutable and can be shared across threads.
#[derive(Debug, Clone)]
pub struct Aligner {
    steps: Vec<Step>,
    initial: Vec<u32>,
    target: Vec<u32>,
    costs: CostScheme,
    max_expansions: usize,
    model_only_cost: f64,
}

type Code = (u8, u32);

#[derive(Debug, Clone, Copy, PartialEq)]
struct Rank {
    cost: f64,
    log_moves: u32,
    moves: u32,
}

impl Rank {
    fn cmp_total(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.log_moves.cmp(&other.log_moves))
            .then(self.moves.cmp(&other.moves))
    }
}

struct Entry {
    rank: Rank,
    path: Vec<Code>,
    marking: Vec<u32>,
    position: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank
            .cmp_total(&other.rank)
            .then_with(|| self.path.cmp(&other.path))
            .then_with(|| (self.position, &self.marking).cmp(&(other.position, &other.marking)))
    }
}

const SYNC: u8 = 0;
const LOG_ONLY: u8 = 1;
const MODEL_ONLY: u8 = 2;
const MODEL_SILENT: u8 = 3;

impl Aligner {
    pub fn new(net: &PetriNet, costs: CostScheme) -> Result<Self, ConformanceError> {
        Self::with_budget(net, costs, DEFAULT_MAX_EXPANSIONS)
    }

    pub fn with_budget(net: &PetriNet, costs: CostScheme, max_expansions: usize) -> Result<Self, ConformanceError> {
        costs.validate()?;
        let dense = |m: &crate::petri::Marking| {
            let mut v = alloc::vec![0u32; net.places.len()];
            for (PlaceId(p), n) in m.iter() {
                v[p] = n;
            }
            v
        };
        let steps = (0..net.transitions.len())
            .map(|t| Step {
                preset: net.preset(TransitionId(t)).map(|p| p.0).collect(),
                postset: net.postset(TransitionId(t)).map(|p| p.0).collect(),
                label: net.transitions[t].label.clone(),
            })
            .collect();
        let mut aligner = Aligner {
            steps,
            initial: dense(&net.initial_marking),
            target: dense(&net.final_marking),
            costs,
            max_expansions,
            model_only_cost: 0.0,
        };
        aligner.model_only_cost = aligner.align(&[])?.total_cost;
        Ok(aligner)
    }

    pub fn costs(&self) -> CostScheme {
        self.costs
    }

    /// Cost of the cheapest run from the initial to the final marking.
    pub fn model_only_cost(&self) -> f64 {
        self.model_only_cost
    }

    /// Alignment cost of the all-log-moves-then-cheapest-run alignment.
    pub fn worst_cost(&self, trace_len: usize) -> f64 {
        trace_len as f64 * self.costs.log_move_cost + self.model_only_cost
    }

    pub fn align(&self, trace: &[Activity]) -> Result<Alignment, ConformanceError> {
        let start = Entry {
            rank: Rank { cost: 0.0, log_moves: 0, moves: 0 },
            path: Vec::new(),
            marking: self.initial.clone(),
            position: 0,
        };
        let mut best: BTreeMap<(usize, Vec<u32>), Rank> = BTreeMap::new();
        best.insert((0, self.initial.clone()), start.rank);
        let mut settled: BTreeSet<(usize, Vec<u32>)> = BTreeSet::new();
        let mut heap = BinaryHeap::from([Reverse(start)]);
        let mut expansions = 0usize;
        while let Some(Reverse(entry)) = heap.pop() {
            let key = (entry.position, entry.marking);
            if settled.contains(&key) {
                continue;
            }
            let (position, marking) = key;
            if position == trace.len() && marking == self.target {
                return Ok(self.decode(trace, &entry.path, entry.rank.cost));
            }
            expansions += 1;
            if expansions > self.max_expansions {
                return Err(ConformanceError::SearchBudgetExceeded(self.max_expansions));
            }
            let mut push = |code: Code, step_cost: f64, next_marking: Vec<u32>, next_position: usize| {
                let log_move = u32::from(code.0 == LOG_ONLY);
                let rank = Rank {
                    cost: entry.rank.cost + step_cost,
                    log_moves: entry.rank.log_moves + log_move,
                    moves: entry.rank.moves + 1,
                };
                let slot = (next_position, next_marking);
                if settled.contains(&slot) {
                    return;
                }
                match best.get(&slot) {
                    Some(b) if b.cmp_total(&rank) == Ordering::Less => return,
                    _ => {
                        best.insert(slot.clone(), rank);
                    }
                }
                let mut path = entry.path.clone();
                path.push(code);
                heap.push(Reverse(Entry { rank, path, marking: slot.1, position: slot.0 }));
            };
            if position < trace.len() {
                push((LOG_ONLY, 0), self.costs.log_move_cost, marking.clone(), position + 1);
            }
            for (t, step) in self.steps.iter().enumerate() {
                if !step.preset.iter().all(|&p| marking[p] > 0) {
                    continue;
                }
                let mut next = marking.clone();
                step.preset.iter().for_each(|&p| next[p] -= 1);
                step.postset.iter().for_each(|&p| next[p] += 1);
                match &step.label {
                    None => push((MODEL_SILENT, t as u32), self.costs.silent_cost, next, position),
                    Some(label) => {
                        if position < trace.len() && *label == trace[position] {
                            push((SYNC, t as u32), self.costs.sync_cost, next.clone(), position + 1);
                        }
                        push((MODEL_ONLY, t as u32), self.costs.model_move_cost, next, position);
                    }
                }
            }
            settled.insert((position, marking));
        }
        Err(ConformanceError::Unreachable)
    }

    fn decode(&self, trace: &[Activity], path: &[Code], total_cost: f64) -> Alignment {
        let mut position = 0;
        let moves = path
            .iter()
            .map(|&(kind, t)| {
                let transition = TransitionId(t as usize);
                let label = || self.steps[t as usize].label.clone().expect("labeled transition");
                match kind {
                    SYNC => {
                        position += 1;
                        Move::Sync { transition, label: label() }
                    }
                    LOG_ONLY => {
                        position += 1;
                        Move::LogOnly { label: trace[position - 1].clone() }
                    }
                    MODEL_ONLY => Move::ModelOnly { transition, label: label() },
                    _ => Move::ModelSilent { transition },
                }
            })
            .collect();
        Alignment { moves, total_cost }
    }

    /// `1 - cost / worst_cost`; 1 when the worst cost is zero.
    pub fn fitness_of(&self, trace_len: usize, alignment: &Alignment) -> f64 {
        let worst = self.worst_cost(trace_len);
        if worst <= 0.0 {
            1.0
        } else {
            1.0 - alignment.total_cost / worst
        }
    }

    pub fn trace_fitness(&self, trace: &[Activity]) -> Result<f64, ConformanceError> {
        Ok(self.fitness_of(trace.len(), &self.align(trace)?))
    }

    pub fn variant_fitness(&self, variant: &Variant) -> Result<VariantFitness, ConformanceError> {
        let alignment = self.align(&variant.0)?;
        let fitness = self.fitness_of(variant.0.len(), &alignment);
        Ok(VariantFitness { events: variant.0.clone(), frequency: variant.1, alignment, fitness })
    }

    /// One result per distinct trace, in [`EventLog::variants`] order.
    pub fn log_variants(&self, log: &EventLog) -> Result<Vec<VariantFitness>, ConformanceError> {
        if log.is_empty() {
            return Err(ConformanceError::EmptyLog);
        }
        log.variants().iter().map(|v| self.variant_fitness(v)).collect()
    }

    /// Frequency-weighted mean trace fitness.
    pub fn log_fitness(&self, log: &EventLog) -> Result<f64, ConformanceError> {
        Ok(mean_fitness(&self.log_variants(log)?))
    }
}

/// Frequency-weighted mean of per-variant fitness values.
pub fn mean_fitness(variants: &[VariantFitness]) -> f64 {
    let total: usize = variants.iter().map(|v| v.frequency).sum();
    if total == 0 {
        return 0.0;
    }
    let sum: f64 = variants.iter().map(|v| v.fitness * v.frequency as f64).sum();
    sum / total as f64
}

pub fn optimal_alignment(trace: &[Activity], net: &PetriNet, costs: CostScheme) -> Result<Alignment, ConformanceError> {
    Aligner::new(net, costs)?.align(trace)
}

pub fn trace_fitness(trace: &[Activity], net: &PetriNet, costs: CostScheme) -> Result<f64, ConformanceError> {
    Aligner::new(net, costs)?.trace_fitness(trace)
}

pub fn log_fitness(log: &EventLog, net: &PetriNet, costs: CostScheme) -> Result<f64, ConformanceError> {
    if log.is_empty() {
        return Err(ConformanceError::EmptyLog);
    }
    Aligner::new(net, costs)?.log_fitness(log)
}
