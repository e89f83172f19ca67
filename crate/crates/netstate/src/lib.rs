//! File formats, experiment drivers and the command-line front end for
//! `netstate-core`.

pub mod canonical;
pub mod logio;
pub mod pcap;
pub mod pnml;
pub mod config;
pub mod experiments;
pub mod report;
pub mod synth;
