//! Canonical TCP packet records.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::net::Ipv4Addr;
use core::str::FromStr;

use thiserror::Error;

/// Errors raised while turning decoded packets into canonical records.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PacketError {
    #[error("packet {index}: both or neither of {src} and {dst} match the client specification")]
    AmbiguousDirection { index: usize, src: Ipv4Addr, dst: Ipv4Addr },
    #[error("session numbers start at 1")]
    InvalidSession,
    #[error("invalid client specification {0:?}")]
    InvalidClientSpec(String),
    #[error("invalid timestamp {0:?}")]
    InvalidTimestamp(String),
    #[error("unknown direction token {0:?}")]
    UnknownDirection(String),
    #[error("unknown flag token {0:?}")]
    UnknownFlag(String),
}

/// Capture timestamp with microsecond resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(u64);

impl Timestamp {
    pub const fn from_micros(micros: u64) -> Self {
        Timestamp(micros)
    }

    pub const fn from_parts(secs: u32, micros: u32) -> Self {
        Timestamp(secs as u64 * 1_000_000 + micros as u64)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub const fn secs(self) -> u64 {
        self.0 / 1_000_000
    }

    pub const fn subsec_micros(self) -> u32 {
        (self.0 % 1_000_000) as u32
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }
}

/// Decimal seconds with exactly six fractional digits.
impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.secs(), self.subsec_micros())
    }
}

impl FromStr for Timestamp {
    type Err = PacketError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PacketError::InvalidTimestamp(String::from(s));
        let (whole, frac) = match s.split_once('.') {
            Some((w, f)) => (w, f),
            None => (s, ""),
        };
        if whole.is_empty() || frac.len() > 6 || !whole.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        if !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let secs: u64 = whole.parse().map_err(|_| bad())?;
        let mut micros: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        for _ in frac.len()..6 {
            micros *= 10;
        }
        secs.checked_mul(1_000_000)
            .and_then(|v| v.checked_add(micros))
            .map(Timestamp)
            .ok_or_else(bad)
    }
}

/// Direction of a packet relative to the monitored client device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    ClientToServer,
    ServerToClient,
}

impl Direction {
    pub const fn token(self) -> &'static str {
        match self {
            Direction::ClientToServer => "C_to_S",
            Direction::ServerToClient => "S_to_C",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Direction {
    type Err = PacketError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "C_to_S" => Ok(Direction::ClientToServer),
            "S_to_C" => Ok(Direction::ServerToClient),
            other => Err(PacketError::UnknownDirection(String::from(other))),
        }
    }
}

/// Set of TCP control flags.
///
/// Bits follow the canonical rendering order SYN, ACK, PSH, FIN, RST, URG,
/// not the on-the-wire bit layout (see [`TcpFlags::from_header_byte`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TcpFlags(u8);

impl TcpFlags {
    pub const SYN: TcpFlags = TcpFlags(1 << 0);
    pub const ACK: TcpFlags = TcpFlags(1 << 1);
    pub const PSH: TcpFlags = TcpFlags(1 << 2);
    pub const FIN: TcpFlags = TcpFlags(1 << 3);
    pub const RST: TcpFlags = TcpFlags(1 << 4);
    pub const URG: TcpFlags = TcpFlags(1 << 5);

    /// All flags in canonical order with their tokens.
    pub const ORDERED: [(TcpFlags, &'static str); 6] = [
        (TcpFlags::SYN, "SYN"),
        (TcpFlags::ACK, "ACK"),
        (TcpFlags::PSH, "PSH"),
        (TcpFlags::FIN, "FIN"),
        (TcpFlags::RST, "RST"),
        (TcpFlags::URG, "URG"),
    ];

    pub const fn empty() -> Self {
        TcpFlags(0)
    }

    pub const fn bits(self) -> u8 {
        self.0
    }

    pub const fn from_bits_truncate(bits: u8) -> Self {
        TcpFlags(bits & 0x3f)
    }

    pub const fn contains(self, other: TcpFlags) -> bool {
        self.0 & other.0 == other.0
    }

    pub const fn union(self, other: TcpFlags) -> Self {
        TcpFlags(self.0 | other.0)
    }

    pub const fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Decode the flag byte at offset 13 of a TCP header.
    pub const fn from_header_byte(byte: u8) -> Self {
        let mut bits = 0;
        if byte & 0x02 != 0 {
            bits |= Self::SYN.0;
        }
        if byte & 0x10 != 0 {
            bits |= Self::ACK.0;
        }
        if byte & 0x08 != 0 {
            bits |= Self::PSH.0;
        }
        if byte & 0x01 != 0 {
            bits |= Self::FIN.0;
        }
        if byte & 0x04 != 0 {
            bits |= Self::RST.0;
        }
        if byte & 0x20 != 0 {
            bits |= Self::URG.0;
        }
        TcpFlags(bits)
    }

    /// Inverse of [`TcpFlags::from_header_byte`].
    pub const fn to_header_byte(self) -> u8 {
        let mut byte = 0;
        if self.contains(Self::SYN) {
            byte |= 0x02;
        }
        if self.contains(Self::ACK) {
            byte |= 0x10;
        }
        if self.contains(Self::PSH) {
            byte |= 0x08;
        }
        if self.contains(Self::FIN) {
            byte |= 0x01;
        }
        if self.contains(Self::RST) {
            byte |= 0x04;
        }
        if self.contains(Self::URG) {
            byte |= 0x20;
        }
        byte
    }

    /// Flags present joined by `+` in canonical order, or `NONE`.
    pub fn canonical(self) -> String {
        let mut out = String::new();
        for (flag, token) in Self::ORDERED {
            if self.contains(flag) {
                if !out.is_empty() {
                    out.push('+');
                }
                out.push_str(token);
            }
        }
        if out.is_empty() {
            out.push_str("NONE");
        }
        out
    }

    /// Parse a `+`-joined flag list in any order; `NONE` is the empty set.
    pub fn parse(s: &str) -> Result<Self, PacketError> {
        if s == "NONE" {
            return Ok(TcpFlags::empty());
        }
        let mut flags = TcpFlags::empty();
        for token in s.split('+') {
            let flag = Self::ORDERED
                .iter()
                .find(|(_, t)| *t == token)
                .map(|(f, _)| *f)
                .ok_or_else(|| PacketError::UnknownFlag(String::from(token)))?;
            if flags.contains(flag) {
                return Err(PacketError::UnknownFlag(String::from(s)));
            }
            flags = flags.union(flag);
        }
        Ok(flags)
    }
}

impl core::ops::BitOr for TcpFlags {
    type Output = TcpFlags;

    fn bitor(self, rhs: TcpFlags) -> TcpFlags {
        self.union(rhs)
    }
}

impl fmt::Display for TcpFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

/// Which endpoint of each packet is the monitored client.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientSpec {
    Address(Ipv4Addr),
    Subnet { network: Ipv4Addr, prefix: u8 },
}

impl ClientSpec {
    pub fn matches(&self, ip: Ipv4Addr) -> bool {
        match *self {
            ClientSpec::Address(addr) => addr == ip,
            ClientSpec::Subnet { network, prefix } => {
                let mask = if prefix == 0 { 0 } else { u32::MAX << (32 - u32::from(prefix)) };
                u32::from(ip) & mask == u32::from(network) & mask
            }
        }
    }
}

impl fmt::Display for ClientSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClientSpec::Address(a) => write!(f, "{a}"),
            ClientSpec::Subnet { network, prefix } => write!(f, "{network}/{prefix}"),
        }
    }
}

impl FromStr for ClientSpec {
    type Err = PacketError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PacketError::InvalidClientSpec(String::from(s));
        match s.split_once('/') {
            Some((net, prefix)) => {
                let network: Ipv4Addr = net.parse().map_err(|_| bad())?;
                let prefix: u8 = prefix.parse().map_err(|_| bad())?;
                if prefix > 32 {
                    return Err(bad());
                }
                Ok(ClientSpec::Subnet { network, prefix })
            }
            None => s.parse().map(ClientSpec::Address).map_err(|_| bad()),
        }
    }
}

/// A decoded IPv4/TCP packet before direction inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawTcpPacket {
    pub timestamp: Timestamp,
    pub src_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_ip: Ipv4Addr,
    pub dst_port: u16,
    pub flags: TcpFlags,
    pub payload_size: u32,
}

/// One canonical packet: the nine attributes used downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketRecord {
    pub timestamp: Timestamp,
    pub direction: Direction,
    pub source_ip: Ipv4Addr,
    pub source_port: u16,
    pub destination_ip: Ipv4Addr,
    pub destination_port: u16,
    pub session_number: u32,
    pub flags: TcpFlags,
    pub payload_size: u32,
}

impl PacketRecord {
    /// The non-client endpoint address.
    pub fn server_ip(&self) -> Ipv4Addr {
        match self.direction {
            Direction::ClientToServer => self.destination_ip,
            Direction::ServerToClient => self.source_ip,
        }
    }

    /// The client-side port.
    pub fn client_port(&self) -> u16 {
        match self.direction {
            Direction::ClientToServer => self.source_port,
            Direction::ServerToClient => self.destination_port,
        }
    }
}

/// Infer directions and stamp every packet with `session_number`.
pub fn to_packet_records(
    raw: &[RawTcpPacket],
    client: &ClientSpec,
    session_number: u32,
) -> Result<Vec<PacketRecord>, PacketError> {
    if session_number == 0 {
        return Err(PacketError::InvalidSession);
    }
    raw.iter()
        .enumerate()
        .map(|(index, p)| {
            let direction = match (client.matches(p.src_ip), client.matches(p.dst_ip)) {
                (true, false) => Direction::ClientToServer,
                (false, true) => Direction::ServerToClient,
                _ => {
                    return Err(PacketError::AmbiguousDirection { index, src: p.src_ip, dst: p.dst_ip })
                }
            };
            Ok(PacketRecord {
                timestamp: p.timestamp,
                direction,
                source_ip: p.src_ip,
                source_port: p.src_port,
                destination_ip: p.dst_ip,
                destination_port: p.dst_port,
                session_number,
                flags: p.flags,
                payload_size: p.payload_size,
            })
        })
        .collect()
}

/// Number of places where a timestamp goes backwards within a session.
pub fn timestamp_regressions(records: &[PacketRecord]) -> usize {
    records
        .windows(2)
        .filter(|w| w[0].session_number == w[1].session_number && w[1].timestamp < w[0].timestamp)
        .count()
}
