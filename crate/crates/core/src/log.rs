//! Per-state event logs built from labeled packet windows.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::packet::{Direction, PacketError, PacketRecord, TcpFlags};
use crate::state::{LabeledPacket, StateId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LogError {
    #[error("event log is empty")]
    EmptyLog,
    #[error("keep fraction must lie in (0, 1], got {0}")]
    InvalidKeepFraction(f64),
    #[error("malformed activity label {0:?}")]
    MalformedLabel(String),
}

/// Event label: direction token, `_`, canonical flag string.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Activity(String);

impl Activity {
    pub fn new(direction: Direction, flags: TcpFlags) -> Self {
        let mut s = String::from(direction.token());
        s.push('_');
        s.push_str(&flags.canonical());
        Activity(s)
    }

    /// Wrap an arbitrary label (used by synthetic logs and imported models).
    pub fn from_label(label: impl Into<String>) -> Self {
        Activity(label.into())
    }

    pub fn of_packet(p: &PacketRecord) -> Self {
        Activity::new(p.direction, p.flags)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Split a packet label back into direction and flag set.
    pub fn parse_packet_label(&self) -> Result<(Direction, TcpFlags), LogError> {
        let bad = |_: PacketError| LogError::MalformedLabel(self.0.clone());
        let (dir, flags) = self
            .0
            .get(..6)
            .zip(self.0.get(6..))
            .ok_or_else(|| LogError::MalformedLabel(self.0.clone()))?;
        let flags = flags.strip_prefix('_').ok_or_else(|| LogError::MalformedLabel(self.0.clone()))?;
        Ok((dir.parse().map_err(bad)?, TcpFlags::parse(flags).map_err(bad)?))
    }

    /// Re-render a packet label with canonical flag order.
    pub fn canonicalize(&self) -> Result<Self, LogError> {
        let (d, f) = self.parse_packet_label()?;
        Ok(Activity::new(d, f))
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Activity {
    fn from(s: &str) -> Self {
        Activity(s.to_owned())
    }
}

/// Case identifier of a trace: device, session and window.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(String, u32, u64)", into = "(String, u32, u64)")]
pub struct TraceId {
    pub device: String,
    pub session: u32,
    pub window: u64,
}

impl From<(String, u32, u64)> for TraceId {
    fn from((device, session, window): (String, u32, u64)) -> Self {
        TraceId { device, session, window }
    }
}

impl From<TraceId> for (String, u32, u64) {
    fn from(t: TraceId) -> Self {
        (t.device, t.session, t.window)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub trace_id: TraceId,
    pub events: Vec<Activity>,
}

/// The traces of one state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventLog {
    pub state: StateId,
    pub traces: Vec<Trace>,
}

/// A distinct event sequence and its number of traces.
pub type Variant = (Vec<Activity>, usize);

impl EventLog {
    pub fn new(state: StateId) -> Self {
        EventLog { state, traces: Vec::new() }
    }

    /// Build a log with synthetic trace ids from plain event sequences.
    pub fn from_sequences<I, S>(state: StateId, sequences: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator,
        S::Item: Into<Activity>,
    {
        let traces = sequences
            .into_iter()
            .enumerate()
            .map(|(i, seq)| Trace {
                trace_id: TraceId { device: String::from("log"), session: 1, window: i as u64 },
                events: seq.into_iter().map(Into::into).collect(),
            })
            .collect();
        EventLog { state, traces }
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    /// Variants sorted by descending frequency, ties by label sequence.
    pub fn variants(&self) -> Vec<Variant> {
        let mut table: BTreeMap<&[Activity], usize> = BTreeMap::new();
        for t in &self.traces {
            *table.entry(&t.events[..]).or_default() += 1;
        }
        let mut out: Vec<Variant> = table.into_iter().map(|(seq, n)| (seq.to_vec(), n)).collect();
        out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }

    /// Distinct activities, sorted.
    pub fn alphabet(&self) -> Vec<Activity> {
        let mut all: Vec<Activity> = self.traces.iter().flat_map(|t| t.events.iter().cloned()).collect();
        all.sort();
        all.dedup();
        all
    }
}

/// Partition labeled packets into one log per state `1..=k`.
///
/// Each window becomes one trace whose events follow capture order.
pub fn extract_event_logs(
    device: &str,
    records: &[PacketRecord],
    labeled: &[LabeledPacket],
    k: usize,
) -> BTreeMap<StateId, EventLog> {
    let mut logs: BTreeMap<StateId, EventLog> =
        (0..k).map(StateId::from_index).map(|s| (s, EventLog::new(s))).collect();
    let mut i = 0;
    while i < labeled.len() {
        let window = labeled[i].window_index;
        let state = labeled[i].state;
        let start = i;
        while i < labeled.len() && labeled[i].window_index == window {
            i += 1;
        }
        let group = &labeled[start..i];
        let first = &records[group[0].packet_index];
        let trace = Trace {
            trace_id: TraceId { device: String::from(device), session: first.session_number, window: window as u64 },
            events: group.iter().map(|p| Activity::of_packet(&records[p.packet_index])).collect(),
        };
        logs.entry(state).or_insert_with(|| EventLog::new(state)).traces.push(trace);
    }
    logs
}

/// Keep the most frequent variants covering at least `keep_fraction` of
/// the traces.
pub fn variant_filter(log: &EventLog, keep_fraction: f64) -> Result<EventLog, LogError> {
    if log.is_empty() {
        return Err(LogError::EmptyLog);
    }
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(LogError::InvalidKeepFraction(keep_fraction));
    }
    let total = log.len() as f64;
    let target = keep_fraction * total - 1e-9 * total;
    let mut kept: Vec<Vec<Activity>> = Vec::new();
    let mut covered = 0usize;
    for (seq, n) in log.variants() {
        if covered as f64 >= target {
            break;
        }
        covered += n;
        kept.push(seq);
    }
    kept.sort();
    let traces = log.traces.iter().filter(|t| kept.binary_search(&t.events).is_ok()).cloned().collect();
    Ok(EventLog { state: log.state, traces })
}
