//! Deterministic synthetic gaming traffic.
//!
//! A flow is a sequence of three-packet exchanges: a handshake, a
//! geometrically distributed number of body exchanges drawn from the
//! profile's weighted templates, and a teardown. Several flows are open at
//! once and interleave exchange by exchange.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log::Activity;
use crate::packet::{Direction, PacketRecord, TcpFlags, Timestamp};

/// Largest payload carried by one generated segment.
pub const MAX_PAYLOAD: u32 = 1460;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

fn invalid(msg: impl Into<String>) -> SynthError {
    SynthError::InvalidSpec(msg.into())
}

/// One packet of an exchange template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketTemplate {
    /// Event label, e.g. `C_to_S_ACK+PSH`.
    pub label: Activity,
    /// Whether the packet carries a payload drawn from its direction's
    /// size distribution.
    pub payload: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub weight: f64,
    pub packets: [PacketTemplate; 3],
}

/// Log-normal parameters of the natural log of the size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayloadSize {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameProfile {
    pub name: String,
    /// Success probability of the geometric body length (mean `1 / p`).
    pub burst_p: f64,
    pub body: Vec<Exchange>,
    pub client_payload: PayloadSize,
    pub server_payload: PayloadSize,
    pub server_pool_size: u32,
    /// First address of the server pool; servers are consecutive.
    pub server_base: Ipv4Addr,
    pub server_port: u16,
    /// Probability that a new flow opens a fresh client port instead of
    /// reusing the previous one.
    pub client_port_churn: f64,
    pub concurrent_flows: usize,
    /// Mean inter-packet gap in microseconds.
    pub mean_gap_us: f64,
}

fn tpl(label: &str, payload: bool) -> PacketTemplate {
    PacketTemplate { label: Activity::from(label), payload }
}

const HANDSHAKE: [(&str, bool); 3] = [("C_to_S_SYN", false), ("S_to_C_SYN+ACK", false), ("C_to_S_ACK", false)];
const TEARDOWN: [(&str, bool); 3] = [("C_to_S_ACK+FIN", false), ("S_to_C_ACK+FIN", false), ("C_to_S_ACK", false)];

impl GameProfile {
    /// Client push bursts closed by a server push.
    pub fn pushburst() -> Self {
        GameProfile {
            name: "pushburst".into(),
            burst_p: 1.0 / 12.0,
            body: alloc::vec![
                Exchange {
                    weight: 0.85,
                    packets: [tpl("C_to_S_ACK+PSH", true), tpl("C_to_S_ACK+PSH", true), tpl("S_to_C_ACK+PSH", true)],
                },
                Exchange {
                    weight: 0.15,
                    packets: [tpl("C_to_S_ACK+PSH", true), tpl("S_to_C_ACK+PSH", true), tpl("C_to_S_ACK", false)],
                },
            ],
            client_payload: PayloadSize { mu: libm::log(120.0), sigma: 0.5 },
            server_payload: PayloadSize { mu: libm::log(300.0), sigma: 0.6 },
            server_pool_size: 4,
            server_base: Ipv4Addr::new(198, 51, 100, 10),
            server_port: 9339,
            client_port_churn: 0.3,
            concurrent_flows: 2,
            mean_gap_us: 500.0,
        }
    }

    /// Server-driven downstream with client acknowledgements.
    pub fn stream() -> Self {
        GameProfile {
            name: "stream".into(),
            burst_p: 1.0 / 25.0,
            body: alloc::vec![
                Exchange {
                    weight: 0.7,
                    packets: [tpl("S_to_C_ACK+PSH", true), tpl("S_to_C_ACK+PSH", true), tpl("C_to_S_ACK", false)],
                },
                Exchange {
                    weight: 0.2,
                    packets: [tpl("S_to_C_ACK", true), tpl("S_to_C_ACK+PSH", true), tpl("C_to_S_ACK", false)],
                },
                Exchange {
                    weight: 0.1,
                    packets: [tpl("C_to_S_ACK+PSH", true), tpl("S_to_C_ACK", false), tpl("S_to_C_ACK+PSH", true)],
                },
            ],
            client_payload: PayloadSize { mu: libm::log(60.0), sigma: 0.4 },
            server_payload: PayloadSize { mu: libm::log(900.0), sigma: 0.4 },
            server_pool_size: 8,
            server_base: Ipv4Addr::new(203, 0, 113, 20),
            server_port: 443,
            client_port_churn: 0.6,
            concurrent_flows: 3,
            mean_gap_us: 200.0,
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "pushburst" => Some(Self::pushburst()),
            "stream" => Some(Self::stream()),
            _ => None,
        }
    }

    /// Blend two profiles: `t = 0` gives `self`, `t = 1` gives `other`.
    ///
    /// Body templates of both are kept with interpolated weights; scalar
    /// parameters are interpolated linearly, integer ones rounded. Server
    /// addresses and ports follow the nearer endpoint.
    pub fn interpolate(&self, other: &GameProfile, t: f64) -> Result<GameProfile, SynthError> {
        if !(0.0..=1.0).contains(&t) {
            return Err(invalid(format!("distinctness {t} outside [0, 1]")));
        }
        let lerp = |a: f64, b: f64| a + (b - a) * t;
        let mut body: Vec<Exchange> = Vec::new();
        let (wa, wb) = (self.total_weight(), other.total_weight());
        for (scale, src) in [((1.0 - t) / wa, &self.body), (t / wb, &other.body)] {
            for e in src {
                match body.iter_mut().find(|x| x.packets == e.packets) {
                    Some(x) => x.weight += e.weight * scale,
                    None => body.push(Exchange { weight: e.weight * scale, packets: e.packets.clone() }),
                }
            }
        }
        body.retain(|e| e.weight > 0.0);
        let near = if t < 0.5 { self } else { other };
        let blend = |a: PayloadSize, b: PayloadSize| PayloadSize { mu: lerp(a.mu, b.mu), sigma: lerp(a.sigma, b.sigma) };
        let out = GameProfile {
            name: format!("{}~{}@{t}", self.name, other.name),
            burst_p: lerp(self.burst_p, other.burst_p),
            body,
            client_payload: blend(self.client_payload, other.client_payload),
            server_payload: blend(self.server_payload, other.server_payload),
            server_pool_size: libm::round(lerp(self.server_pool_size as f64, other.server_pool_size as f64)) as u32,
            server_base: near.server_base,
            server_port: near.server_port,
            client_port_churn: lerp(self.client_port_churn, other.client_port_churn),
            concurrent_flows: libm::round(lerp(self.concurrent_flows as f64, other.concurrent_flows as f64)) as usize,
            mean_gap_us: lerp(self.mean_gap_us, other.mean_gap_us),
        };
        out.validate()?;
        Ok(out)
    }

    fn total_weight(&self) -> f64 {
        self.body.iter().map(|e| e.weight).sum()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.burst_p > 0.0 && self.burst_p <= 1.0) {
            return Err(invalid(format!("burst_p {} outside (0, 1]", self.burst_p)));
        }
        if self.body.is_empty() {
            return Err(invalid("profile has no body exchanges"));
        }
        if self.body.iter().any(|e| !(e.weight.is_finite() && e.weight >= 0.0)) || !(self.total_weight() > 0.0) {
            return Err(invalid("exchange weights must be non-negative with a positive sum"));
        }
        for e in &self.body {
            for p in &e.packets {
                p.label.parse_packet_label().map_err(|_| invalid(format!("bad label {}", p.label)))?;
            }
        }
        for s in [self.client_payload, self.server_payload] {
            if !(s.mu.is_finite() && s.sigma.is_finite() && s.sigma >= 0.0) {
                return Err(invalid("payload size parameters must be finite with sigma >= 0"));
            }
        }
        if self.server_pool_size == 0 {
            return Err(invalid("server_pool_size must be at least 1"));
        }
        if u32::from(self.server_base).checked_add(self.server_pool_size - 1).is_none() {
            return Err(invalid("server pool overflows the address space"));
        }
        if !(0.0..=1.0).contains(&self.client_port_churn) {
            return Err(invalid("client_port_churn outside [0, 1]"));
        }
        if self.concurrent_flows == 0 {
            return Err(invalid("concurrent_flows must be at least 1"));
        }
        if !(self.mean_gap_us.is_finite() && self.mean_gap_us > 0.0) {
            return Err(invalid("mean_gap_us must be positive"));
        }
        Ok(())
    }

    /// Long-run share of each event label among generated packets,
    /// ignoring flows cut short by the session budget.
    pub fn expected_label_mix(&self) -> BTreeMap<Activity, f64> {
        let mean_body = 1.0 / self.burst_p;
        let total = self.total_weight();
        let mut mix: BTreeMap<Activity, f64> = BTreeMap::new();
        for (label, _) in HANDSHAKE.iter().chain(TEARDOWN.iter()) {
            *mix.entry(Activity::from(*label)).or_default() += 1.0;
        }
        for e in &self.body {
            for p in &e.packets {
                *mix.entry(p.label.clone()).or_default() += mean_body * e.weight / total;
            }
        }
        let packets = 3.0 * (2.0 + mean_body);
        mix.values_mut().for_each(|v| *v /= packets);
        mix
    }

    fn handshake(&self) -> [PacketTemplate; 3] {
        HANDSHAKE.map(|(l, p)| tpl(l, p))
    }

    fn teardown(&self) -> [PacketTemplate; 3] {
        TEARDOWN.map(|(l, p)| tpl(l, p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub device_id: String,
    pub profile: GameProfile,
    pub client_ip: Ipv4Addr,
    /// Packet budget of each session, in order.
    pub session_packets: Vec<usize>,
    pub seed: u64,
}

impl DeviceSpec {
    pub fn validate(&self, window_length: usize) -> Result<(), SynthError> {
        self.profile.validate()?;
        if self.session_packets.is_empty() {
            return Err(invalid("device has no sessions"));
        }
        if let Some(b) = self.session_packets.iter().find(|b| **b < window_length) {
            return Err(invalid(format!("session budget {b} below window length {window_length}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct Flow {
    server: Ipv4Addr,
    client_port: u16,
    remaining_body: usize,
    opened: bool,
}

struct Generator<'a> {
    spec: &'a DeviceSpec,
    rng: ChaCha8Rng,
    gap: Exp<f64>,
    body_len: Geometric,
    client_size: LogNormal<f64>,
    server_size: LogNormal<f64>,
    clock: u64,
    last_port: u16,
}

impl Generator<'_> {
    fn fresh_port(&mut self) -> u16 {
        self.rng.random_range(49152..=65535)
    }

    fn open_flow(&mut self) -> Flow {
        let p = &self.spec.profile;
        let server = Ipv4Addr::from(u32::from(p.server_base) + self.rng.random_range(0..p.server_pool_size));
        if self.rng.random::<f64>() < p.client_port_churn {
            self.last_port = self.fresh_port();
        }
        let remaining_body = 1 + self.body_len.sample(&mut self.rng) as usize;
        Flow { server, client_port: self.last_port, remaining_body, opened: false }
    }

    fn pick_body(&mut self) -> [PacketTemplate; 3] {
        let body = &self.spec.profile.body;
        let mut x = self.rng.random::<f64>() * self.spec.profile.total_weight();
        for e in body {
            if x < e.weight {
                return e.packets.clone();
            }
            x -= e.weight;
        }
        body.iter().rev().find(|e| e.weight > 0.0).expect("validated weights").packets.clone()
    }

    fn packet(&mut self, flow: &Flow, t: &PacketTemplate, session: u32) -> PacketRecord {
        let (direction, flags): (Direction, TcpFlags) = t.label.parse_packet_label().expect("validated labels");
        self.clock += 1 + self.gap.sample(&mut self.rng) as u64;
        let p = &self.spec.profile;
        let payload_size = if t.payload {
            let size = match direction {
                Direction::ClientToServer => self.client_size.sample(&mut self.rng),
                Direction::ServerToClient => self.server_size.sample(&mut self.rng),
            };
            (libm::round(size) as u32).clamp(1, MAX_PAYLOAD)
        } else {
            0
        };
        let client = (self.spec.client_ip, flow.client_port);
        let server = (flow.server, p.server_port);
        let (src, dst) = match direction {
            Direction::ClientToServer => (client, server),
            Direction::ServerToClient => (server, client),
        };
        PacketRecord {
            timestamp: Timestamp::from_micros(self.clock),
            direction,
            source_ip: src.0,
            source_port: src.1,
            destination_ip: dst.0,
            destination_port: dst.1,
            session_number: session,
            flags,
            payload_size,
        }
    }

    fn session(&mut self, session: u32, budget: usize, out: &mut Vec<PacketRecord>) {
        let start = out.len();
        let mut flows: Vec<Flow> = Vec::new();
        while out.len() - start < budget {
            while flows.len() < self.spec.profile.concurrent_flows {
                let f = self.open_flow();
                flows.push(f);
            }
            let i = self.rng.random_range(0..flows.len());
            let f = &mut flows[i];
            let (exchange, closing) = if !f.opened {
                f.opened = true;
                (self.spec.profile.handshake(), false)
            } else if f.remaining_body > 0 {
                f.remaining_body -= 1;
                (self.pick_body(), false)
            } else {
                (self.spec.profile.teardown(), true)
            };
            let flow = if closing { flows.swap_remove(i) } else { flows[i] };
            for t in &exchange {
                if out.len() - start == budget {
                    break;
                }
                let p = self.packet(&flow, t, session);
                out.push(p);
            }
        }
    }
}

/// All sessions of one device, in capture order.
pub fn generate_device(spec: &DeviceSpec) -> Result<Vec<PacketRecord>, SynthError> {
    spec.validate(2)?;
    let p = &spec.profile;
    let lognormal = |s: PayloadSize| LogNormal::new(s.mu, s.sigma).map_err(|e| invalid(format!("{e}")));
    let mut g = Generator {
        spec,
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        gap: Exp::new(1.0 / p.mean_gap_us).map_err(|e| invalid(format!("{e}")))?,
        body_len: Geometric::new(p.burst_p).map_err(|e| invalid(format!("{e}")))?,
        client_size: lognormal(p.client_payload)?,
        server_size: lognormal(p.server_payload)?,
        clock: 1_700_000_000_000_000,
        last_port: 0,
    };
    g.last_port = g.fresh_port();
    let mut out = Vec::with_capacity(spec.session_packets.iter().sum());
    for (i, budget) in spec.session_packets.iter().enumerate() {
        g.session(i as u32 + 1, *budget, &mut out);
        // idle time between capture sessions
        g.clock += 60_000_000;
    }
    Ok(out)
}

/// Seed of the `index`-th device of a cohort (SplitMix64 of the pair).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDevice {
    pub spec: DeviceSpec,
    pub records: Vec<PacketRecord>,
}

/// Devices `d1, d2, ...` in the order of `groups`, each with
/// `sessions` sessions of `packets_per_session` packets.
pub fn cohort_specs(
    groups: &[(GameProfile, usize)],
    sessions: usize,
    packets_per_session: usize,
    master_seed: u64,
) -> Result<Vec<DeviceSpec>, SynthError> {
    let mut out = Vec::new();
    for (profile, count) in groups {
        profile.validate()?;
        for _ in 0..*count {
            let i = out.len();
            out.push(DeviceSpec {
                device_id: format!("d{}", i + 1),
                profile: profile.clone(),
                client_ip: Ipv4Addr::new(10, 0, (i / 250) as u8, (i % 250) as u8 + 2),
                session_packets: alloc::vec![packets_per_session; sessions],
                seed: derive_seed(master_seed, i as u64),
            });
        }
    }
    if out.is_empty() {
        return Err(invalid("cohort has no devices"));
    }
    Ok(out)
}

pub fn generate_cohort(
    groups: &[(GameProfile, usize)],
    sessions: usize,
    packets_per_session: usize,
    master_seed: u64,
) -> Result<Vec<SyntheticDevice>, SynthError> {
    cohort_specs(groups, sessions, packets_per_session, master_seed)?
        .into_iter()
        .map(|spec| generate_device(&spec).map(|records| SyntheticDevice { spec, records }))
        .collect()
}
