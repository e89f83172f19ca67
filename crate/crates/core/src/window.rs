//! Non-overlapping packet windows and their per-window statistics.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use thiserror::Error;

use crate::packet::{PacketRecord, TcpFlags};

/// Number of statistics computed per window.
pub const FEATURE_COUNT: usize = 8;

/// Column names of [`WindowStats::features`], in order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] =
    ["avg_payload", "n_servers", "n_user_ports", "n_ack", "n_syn", "n_fin", "n_psh", "n_rst"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WindowError {
    #[error("window length must be at least 2, got {0}")]
    TooShort(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowConfig {
    window_length: usize,
}

impl WindowConfig {
    pub fn new(window_length: usize) -> Result<Self, WindowError> {
        if window_length < 2 {
            return Err(WindowError::TooShort(window_length));
        }
        Ok(WindowConfig { window_length })
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }
}

/// Statistics of one window of `l` consecutive same-session packets.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStats {
    /// Position of the window in the device's window sequence.
    pub window_index: usize,
    pub session_number: u32,
    /// Index of the window's first packet in the input records.
    pub first_packet: usize,
    pub features: [f64; FEATURE_COUNT],
}

/// Half-open record ranges `[start, end)` of maximal same-session runs.
pub fn session_runs(records: &[PacketRecord]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=records.len() {
        if i == records.len() || records[i].session_number != records[start].session_number {
            if i > start {
                runs.push((start, i));
            }
            start = i;
        }
    }
    runs
}

/// Compute the statistics of a single group of packets.
pub fn window_features(packets: &[PacketRecord]) -> [f64; FEATURE_COUNT] {
    let n = packets.len().max(1) as f64;
    let payload: u64 = packets.iter().map(|p| u64::from(p.payload_size)).sum();
    let servers: BTreeSet<_> = packets.iter().map(|p| p.server_ip()).collect();
    let ports: BTreeSet<_> = packets.iter().map(|p| p.client_port()).collect();
    let count = |flag: TcpFlags| packets.iter().filter(|p| p.flags.contains(flag)).count() as f64;
    [
        payload as f64 / n,
        servers.len() as f64,
        ports.len() as f64,
        count(TcpFlags::ACK),
        count(TcpFlags::SYN),
        count(TcpFlags::FIN),
        count(TcpFlags::PSH),
        count(TcpFlags::RST),
    ]
}

/// Split records into non-overlapping windows of `l` packets.
///
/// Windows never cross a session boundary; the trailing `< l` packets of
/// each session run are dropped.
pub fn extract_windows(records: &[PacketRecord], cfg: WindowConfig) -> Vec<WindowStats> {
    let l = cfg.window_length;
    let mut out = Vec::new();
    for (start, end) in session_runs(records) {
        let mut pos = start;
        while pos + l <= end {
            out.push(WindowStats {
                window_index: out.len(),
                session_number: records[pos].session_number,
                first_packet: pos,
                features: window_features(&records[pos..pos + l]),
            });
            pos += l;
        }
    }
    out
}
