//! Behavioral modeling of TCP traffic states.
//!
//! Packets are grouped into fixed-length windows, windows are clustered into
//! unsupervised traffic states, and each state is encoded as a Petri net mined
//! from the windows' event sequences. Unseen traffic is then classified by
//! alignment-based conformance against the per-state nets.
//!
//! The crate is `no_std` and only needs an allocator. File formats, capture
//! decoding and the command-line tool live in the `netstate` crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod conformance;
pub mod discovery;
pub mod eval;
pub mod log;
pub mod packet;
pub mod petri;
pub mod pipeline;
pub mod state;
pub mod synth;
pub mod window;

pub use conformance::{Aligner, Alignment, CostScheme, Move};
pub use discovery::{DirectlyFollowsGraph, ProcessTree};
pub use log::{Activity, EventLog, Trace, TraceId};
pub use packet::{ClientSpec, Direction, PacketRecord, RawTcpPacket, TcpFlags, Timestamp};
pub use petri::{Marking, PetriNet};
pub use state::{StateId, StateModel, Standardization};
pub use window::{WindowConfig, WindowStats};
