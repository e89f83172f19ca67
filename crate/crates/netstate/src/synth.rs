//! Synthetic cohorts on disk: canonical CSV per device, optional per-session
//! pcaps, and ready-to-run experiment configs.

use std::path::PathBuf;

use netstate_core::synth::{generate_cohort, GameProfile, SynthError, SyntheticDevice};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::canonical_bytes;
use crate::config::{DeviceConfig, Roles, RunConfig};
use crate::pcap::write_session_pcaps;
use crate::report::{OutputDir, ReportError};

#[derive(Debug, Error)]
pub enum SynthCliError {
    #[error("invalid cohort: {0}")]
    Spec(String),
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl From<SynthError> for SynthCliError {
    fn from(e: SynthError) -> Self {
        SynthCliError::Spec(e.to_string())
    }
}

/// A built-in profile name or an inline profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileRef {
    Builtin(String),
    Inline(Box<GameProfile>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupDoc {
    pub profile: ProfileRef,
    pub devices: usize,
}

/// Cohort definition: the first group is the monitored game, later groups
/// are foreign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortDoc {
    pub groups: Vec<GroupDoc>,
}

fn builtin(name: &str) -> Result<GameProfile, SynthCliError> {
    GameProfile::builtin(name).ok_or_else(|| SynthCliError::Spec(format!("unknown profile {name:?}")))
}

/// `two-games` (8 pushburst + 4 stream), `one-game` (8 + 4 pushburst), or
/// a path to a [`CohortDoc`].
pub fn cohort_groups(spec: &str) -> Result<Vec<(GameProfile, usize)>, SynthCliError> {
    match spec {
        "two-games" => Ok(vec![(builtin("pushburst")?, 8), (builtin("stream")?, 4)]),
        "one-game" => Ok(vec![(builtin("pushburst")?, 8), (builtin("pushburst")?, 4)]),
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| SynthCliError::Spec(format!("{path}: {e}")))?;
            let doc: CohortDoc = serde_json::from_str(&text).map_err(|e| SynthCliError::Spec(format!("{path}: {e}")))?;
            doc.groups
                .into_iter()
                .map(|g| {
                    let p = match g.profile {
                        ProfileRef::Builtin(n) => builtin(&n)?,
                        ProfileRef::Inline(p) => *p,
                    };
                    Ok((p, g.devices))
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthOptions {
    pub sessions: usize,
    pub packets_per_session: usize,
    pub seed: u64,
    pub pcap: bool,
}

fn base_config(devices: Vec<DeviceConfig>, seed: u64) -> RunConfig {
    RunConfig {
        devices,
        window_lengths: vec![3],
        ks: vec![4],
        seed,
        noise_threshold: netstate_core::discovery::DEFAULT_NOISE_THRESHOLD,
        keep_fraction: 1.0,
        segment_fraction: 0.01,
        roles: Roles::default(),
        exp1_devices: Vec::new(),
        out: PathBuf::from("results"),
        workers: 0,
    }
}

/// Similarity config over the first group and classification config with
/// roles train / validation / test-own from the first group and every later
/// group as foreign. Either is `None` when the cohort is too small for it.
pub fn experiment_configs(
    devices: &[SyntheticDevice],
    group_sizes: &[usize],
    seed: u64,
) -> (Option<RunConfig>, Option<RunConfig>) {
    let configs: Vec<DeviceConfig> = devices
        .iter()
        .map(|d| DeviceConfig {
            id: d.spec.device_id.clone(),
            inputs: vec![PathBuf::from(format!("{}.csv", d.spec.device_id))],
            client: Some(d.spec.client_ip.to_string()),
        })
        .collect();
    let own = group_sizes.first().copied().unwrap_or(0);
    let ids: Vec<String> = configs.iter().map(|d| d.id.clone()).collect();
    let exp1 = (own >= 2).then(|| {
        let mut c = base_config(configs[..own].to_vec(), seed);
        c.window_lengths = vec![2, 3, 4];
        c.ks = vec![2, 3];
        c
    });
    let exp2 = (own >= 3 && ids.len() > own).then(|| {
        let validation = (own - 2).min(3);
        let mut c = base_config(configs.clone(), seed);
        c.roles = Roles {
            train: Some(ids[0].clone()),
            validation: ids[1..1 + validation].to_vec(),
            test_own: ids[1 + validation..own].to_vec(),
            test_foreign: ids[own..].to_vec(),
        };
        c
    });
    (exp1, exp2)
}

/// Generate the cohort under `out`; returns the number of devices.
pub fn write_synth(groups: &[(GameProfile, usize)], opts: &SynthOptions, out: &OutputDir) -> Result<usize, SynthCliError> {
    let devices = generate_cohort(groups, opts.sessions, opts.packets_per_session, opts.seed)?;
    for d in &devices {
        let id = &d.spec.device_id;
        out.write(format!("{id}.csv"), &canonical_bytes(&d.records))?;
        if opts.pcap {
            for (s, bytes) in write_session_pcaps(&d.records) {
                out.write(format!("{id}/session{s}.pcap"), &bytes)?;
            }
        }
    }
    let specs: Vec<_> = devices.iter().map(|d| &d.spec).collect();
    out.write_json("cohort.json", &specs)?;
    let sizes: Vec<usize> = groups.iter().map(|g| g.1).collect();
    let (exp1, exp2) = experiment_configs(&devices, &sizes, opts.seed);
    if let Some(c) = exp1 {
        out.write_json("exp1.json", &c)?;
    }
    if let Some(c) = exp2 {
        out.write_json("exp2.json", &c)?;
    }
    Ok(devices.len())
}
