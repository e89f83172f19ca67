//! Run configuration and device loading.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use netstate_core::packet::{timestamp_regressions, to_packet_records, ClientSpec, PacketError, PacketRecord};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{read_canonical, CanonicalError};
use crate::pcap::{parse_pcap, PcapError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("input missing: {}", .0.display())]
    InputMissing(PathBuf),
    #[error("{}: {source}", path.display())]
    Pcap { path: PathBuf, source: PcapError },
    #[error("{}: {source}", path.display())]
    Canonical { path: PathBuf, source: CanonicalError },
    #[error("{}: {source}", path.display())]
    Packet { path: PathBuf, source: PacketError },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::ConfigInvalid(msg.into())
}

/// One monitored device. `inputs` are canonical CSV files or pcap files;
/// each pcap file is one session, numbered after any sessions already read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub id: String,
    pub inputs: Vec<PathBuf>,
    /// Client address or CIDR subnet; required for pcap inputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Roles {
    #[serde(default)]
    pub train: Option<String>,
    #[serde(default)]
    pub validation: Vec<String>,
    #[serde(default)]
    pub test_own: Vec<String>,
    #[serde(default)]
    pub test_foreign: Vec<String>,
}

impl Roles {
    pub fn is_empty(&self) -> bool {
        self.train.is_none() && self.validation.is_empty() && self.test_own.is_empty() && self.test_foreign.is_empty()
    }

    fn all(&self) -> impl Iterator<Item = &String> {
        self.train.iter().chain(&self.validation).chain(&self.test_own).chain(&self.test_foreign)
    }
}

fn default_noise() -> f64 {
    netstate_core::discovery::DEFAULT_NOISE_THRESHOLD
}
fn one() -> f64 {
    1.0
}
fn default_segment() -> f64 {
    0.01
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub devices: Vec<DeviceConfig>,
    pub window_lengths: Vec<usize>,
    pub ks: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_noise")]
    pub noise_threshold: f64,
    #[serde(default = "one")]
    pub keep_fraction: f64,
    #[serde(default = "default_segment")]
    pub segment_fraction: f64,
    #[serde(default)]
    pub roles: Roles,
    /// Devices compared by the similarity/separation experiment; all
    /// devices when empty.
    #[serde(default)]
    pub exp1_devices: Vec<String>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Worker threads; 0 picks the number of CPUs.
    #[serde(default)]
    pub workers: usize,
}

impl RunConfig {
    /// Parse and resolve relative input paths against `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        for d in &mut cfg.devices {
            for p in &mut d.inputs {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        if cfg.out.is_relative() && !base.as_os_str().is_empty() {
            cfg.out = base.join(&cfg.out);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        if !path.exists() {
            return Err(ConfigError::InputMissing(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new("")))
    }

    /// Digest of the effective configuration, recorded beside every output.
    pub fn digest(&self) -> String {
        crate::report::sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    pub fn device(&self, id: &str) -> Option<&DeviceConfig> {
        self.devices.iter().find(|d| d.id == id)
    }

    /// Checks shared by every experiment.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.window_lengths.is_empty() || self.ks.is_empty() {
            return Err(invalid("window_lengths and ks must be non-empty"));
        }
        if let Some(l) = self.window_lengths.iter().find(|l| **l < 2) {
            return Err(invalid(format!("window length {l} is below 2")));
        }
        if let Some(k) = self.ks.iter().find(|k| **k < 1) {
            return Err(invalid(format!("state count {k} is below 1")));
        }
        if !(0.0..=1.0).contains(&self.noise_threshold) {
            return Err(invalid("noise_threshold must lie in [0, 1]"));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(invalid("keep_fraction must lie in (0, 1]"));
        }
        if !(self.segment_fraction > 0.0 && self.segment_fraction <= 1.0) {
            return Err(invalid("segment_fraction must lie in (0, 1]"));
        }
        let mut ids = BTreeSet::new();
        for d in &self.devices {
            if !ids.insert(d.id.as_str()) {
                return Err(invalid(format!("duplicate device id {}", d.id)));
            }
            if d.inputs.is_empty() {
                return Err(invalid(format!("device {} has no inputs", d.id)));
            }
            if let Some(c) = &d.client {
                c.parse::<ClientSpec>().map_err(|e| invalid(format!("device {}: {e}", d.id)))?;
            }
            if let Some(p) = d.inputs.iter().find(|p| !p.exists()) {
                return Err(ConfigError::InputMissing(p.clone()));
            }
        }
        let mut seen = BTreeSet::new();
        for id in self.roles.all().chain(&self.exp1_devices) {
            if !ids.contains(id.as_str()) {
                return Err(invalid(format!("unknown device {id}")));
            }
        }
        for id in self.roles.all() {
            if !seen.insert(id) {
                return Err(invalid(format!("device {id} has more than one role")));
            }
        }
        Ok(())
    }

    pub fn exp1_device_ids(&self) -> Vec<String> {
        if self.exp1_devices.is_empty() {
            self.devices.iter().map(|d| d.id.clone()).collect()
        } else {
            self.exp1_devices.clone()
        }
    }

    pub fn validate_exp1(&self) -> Result<(), ConfigError> {
        self.validate()?;
        if self.exp1_device_ids().len() < 2 {
            return Err(invalid("the similarity experiment needs at least 2 devices"));
        }
        if self.ks.contains(&1) {
            return Err(invalid("separation needs at least 2 states per cell"));
        }
        Ok(())
    }

    pub fn validate_exp2(&self) -> Result<(), ConfigError> {
        self.validate()?;
        let r = &self.roles;
        if r.train.is_none() || r.validation.is_empty() || r.test_own.is_empty() || r.test_foreign.is_empty() {
            return Err(invalid("roles need a train device and non-empty validation, test_own and test_foreign"));
        }
        Ok(())
    }
}

/// Records of one device, with the number of timestamp regressions seen.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDevice {
    pub id: String,
    pub records: Vec<PacketRecord>,
    pub timestamp_regressions: usize,
    pub skipped_frames: usize,
}

fn is_pcap(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("pcap" | "cap"))
}

/// Read a pcap as one session.
pub fn load_pcap(path: &Path, client: &ClientSpec, session: u32) -> Result<(Vec<PacketRecord>, usize), ConfigError> {
    let bytes = fs::read(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let cap = parse_pcap(&bytes).map_err(|source| ConfigError::Pcap { path: path.to_path_buf(), source })?;
    let records = to_packet_records(&cap.packets, client, session)
        .map_err(|source| ConfigError::Packet { path: path.to_path_buf(), source })?;
    Ok((records, cap.skipped))
}

pub fn load_csv(path: &Path) -> Result<Vec<PacketRecord>, ConfigError> {
    let file = fs::File::open(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    read_canonical(std::io::BufReader::new(file)).map_err(|source| ConfigError::Canonical { path: path.to_path_buf(), source })
}

pub fn load_device(d: &DeviceConfig) -> Result<LoadedDevice, ConfigError> {
    let mut out = LoadedDevice { id: d.id.clone(), records: Vec::new(), timestamp_regressions: 0, skipped_frames: 0 };
    let client = d.client.as_deref().map(str::parse::<ClientSpec>).transpose().map_err(|e| invalid(e.to_string()))?;
    for path in &d.inputs {
        if !path.exists() {
            return Err(ConfigError::InputMissing(path.clone()));
        }
        let next = out.records.iter().map(|r| r.session_number).max().unwrap_or(0) + 1;
        if is_pcap(path) {
            let client = client.as_ref().ok_or_else(|| invalid(format!("device {} reads pcap without a client", d.id)))?;
            let (records, skipped) = load_pcap(path, client, next)?;
            out.records.extend(records);
            out.skipped_frames += skipped;
        } else {
            out.records.extend(load_csv(path)?);
        }
    }
    out.timestamp_regressions = timestamp_regressions(&out.records);
    Ok(out)
}

/// Load the named devices concurrently, preserving the requested order.
pub fn load_devices(cfg: &RunConfig, ids: &[String]) -> Result<Vec<LoadedDevice>, ConfigError> {
    ids.par_iter()
        .map(|id| load_device(cfg.device(id).ok_or_else(|| invalid(format!("unknown device {id}")))?))
        .collect()
}
