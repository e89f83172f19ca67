//! Inductive process discovery: event log to process tree to workflow net.

mod compile;
mod dfg;
mod miner;
mod tree;

pub use compile::tree_to_petri;
pub use dfg::{build_dfg, filter_dfg, DirectlyFollowsGraph};
pub use miner::{inductive_miner, DEFAULT_NOISE_THRESHOLD};
pub use tree::{ParseTreeError, ProcessTree};

use crate::log::EventLog;
use crate::petri::PetriNet;

/// Mine a log and compile the resulting tree.
pub fn discover(log: &EventLog, noise_threshold: f64) -> (ProcessTree, PetriNet) {
    let tree = inductive_miner(log, noise_threshold);
    let net = tree_to_petri(&tree);
    (tree, net)
}
