//! Classic pcap decoding (Ethernet II / IPv4 / TCP) and encoding.

use std::net::Ipv4Addr;

use netstate_core::packet::{PacketRecord, RawTcpPacket, TcpFlags, Timestamp};
use thiserror::Error;

const MAGIC: u32 = 0xa1b2c3d4;
const LINKTYPE_ETHERNET: u32 = 1;
const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_VLAN: u16 = 0x8100;
const IPPROTO_TCP: u8 = 6;
const GLOBAL_HEADER: usize = 24;
const RECORD_HEADER: usize = 16;
const ETHERNET_HEADER: usize = 14;
/// Snap length recorded by [`write_pcap`]: frames are stored without
/// payload bytes.
pub const WRITE_SNAPLEN: u32 = 96;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PcapError {
    #[error("unsupported magic number {0:#010x}")]
    UnsupportedMagic(u32),
    #[error("capture shorter than the 24-byte global header")]
    TruncatedHeader,
    #[error("unsupported link type {0}")]
    UnsupportedLinkType(u32),
    #[error("record {index} at byte {offset}: {reason}")]
    TruncatedRecord { index: usize, offset: usize, reason: &'static str },
    #[error("record {index}: microsecond field {micros} out of range")]
    InvalidTimestamp { index: usize, micros: u32 },
}

/// Decoded TCP packets and the number of frames that were not IPv4/TCP.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Capture {
    pub packets: Vec<RawTcpPacket>,
    pub skipped: usize,
}

impl Capture {
    pub fn frames(&self) -> usize {
        self.packets.len() + self.skipped
    }
}

#[derive(Clone, Copy)]
enum Endian {
    Little,
    Big,
}

impl Endian {
    fn u32(self, b: &[u8]) -> u32 {
        let a = [b[0], b[1], b[2], b[3]];
        match self {
            Endian::Little => u32::from_le_bytes(a),
            Endian::Big => u32::from_be_bytes(a),
        }
    }
}

fn be16(b: &[u8]) -> u16 {
    u16::from_be_bytes([b[0], b[1]])
}

pub fn parse_pcap(bytes: &[u8]) -> Result<Capture, PcapError> {
    if bytes.len() < GLOBAL_HEADER {
        return Err(PcapError::TruncatedHeader);
    }
    let endian = match u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) {
        MAGIC => Endian::Little,
        m if m.swap_bytes() == MAGIC => Endian::Big,
        m => return Err(PcapError::UnsupportedMagic(m)),
    };
    let link = endian.u32(&bytes[20..24]);
    if link != LINKTYPE_ETHERNET {
        return Err(PcapError::UnsupportedLinkType(link));
    }
    let mut out = Capture::default();
    let mut offset = GLOBAL_HEADER;
    let mut index = 0;
    while offset < bytes.len() {
        let truncated = |reason| PcapError::TruncatedRecord { index, offset, reason };
        if bytes.len() - offset < RECORD_HEADER {
            return Err(truncated("record header exceeds remaining bytes"));
        }
        let h = &bytes[offset..offset + RECORD_HEADER];
        let (secs, micros, incl) = (endian.u32(&h[0..4]), endian.u32(&h[4..8]), endian.u32(&h[8..12]) as usize);
        if micros >= 1_000_000 {
            return Err(PcapError::InvalidTimestamp { index, micros });
        }
        let start = offset + RECORD_HEADER;
        if incl > bytes.len() - start {
            return Err(truncated("record length exceeds remaining bytes"));
        }
        let frame = &bytes[start..start + incl];
        match decode_frame(frame).map_err(truncated)? {
            Some(mut p) => {
                p.timestamp = Timestamp::from_parts(secs, micros);
                out.packets.push(p);
            }
            None => out.skipped += 1,
        }
        offset = start + incl;
        index += 1;
    }
    Ok(out)
}

/// `Ok(None)` for frames that are not IPv4/TCP.
fn decode_frame(frame: &[u8]) -> Result<Option<RawTcpPacket>, &'static str> {
    if frame.len() < ETHERNET_HEADER {
        return Ok(None);
    }
    let mut ip_start = ETHERNET_HEADER;
    let mut ethertype = be16(&frame[12..14]);
    if ethertype == ETHERTYPE_VLAN && frame.len() >= ETHERNET_HEADER + 4 {
        ethertype = be16(&frame[16..18]);
        ip_start += 4;
    }
    if ethertype != ETHERTYPE_IPV4 {
        return Ok(None);
    }
    let ip = &frame[ip_start..];
    if ip.len() < 20 || ip[0] >> 4 != 4 {
        return Ok(None);
    }
    if ip[9] != IPPROTO_TCP {
        return Ok(None);
    }
    // non-initial fragments carry no TCP header
    if be16(&ip[6..8]) & 0x1fff != 0 {
        return Ok(None);
    }
    let ihl = usize::from(ip[0] & 0x0f) * 4;
    let total = usize::from(be16(&ip[2..4]));
    if ihl < 20 || ip.len() < ihl + 20 {
        return Err("IPv4/TCP headers exceed captured bytes");
    }
    let tcp = &ip[ihl..];
    let doff = usize::from(tcp[12] >> 4) * 4;
    if doff < 20 || tcp.len() < doff {
        return Err("TCP header exceeds captured bytes");
    }
    let payload = total.checked_sub(ihl + doff).ok_or("IPv4 total length implies a negative payload")?;
    Ok(Some(RawTcpPacket {
        timestamp: Timestamp::default(),
        src_ip: Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]),
        src_port: be16(&tcp[0..2]),
        dst_ip: Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]),
        dst_port: be16(&tcp[2..4]),
        flags: TcpFlags::from_header_byte(tcp[13]),
        payload_size: payload as u32,
    }))
}

fn ipv4_checksum(header: &[u8]) -> u16 {
    let mut sum: u32 = header.chunks(2).map(|c| u32::from(u16::from_be_bytes([c[0], c[1]]))).sum();
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

/// Encode one frame's headers; the payload is implied by the IPv4 total
/// length only.
fn encode_frame(p: &RawTcpPacket, out: &mut Vec<u8>) {
    out.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x01, 0x02, 0, 0, 0, 0, 0x02]);
    out.extend_from_slice(&ETHERTYPE_IPV4.to_be_bytes());
    let total = (40 + p.payload_size).min(u32::from(u16::MAX)) as u16;
    let mut ip = [0u8; 20];
    ip[0] = 0x45;
    ip[2..4].copy_from_slice(&total.to_be_bytes());
    ip[6] = 0x40;
    ip[8] = 64;
    ip[9] = IPPROTO_TCP;
    ip[12..16].copy_from_slice(&p.src_ip.octets());
    ip[16..20].copy_from_slice(&p.dst_ip.octets());
    let sum = ipv4_checksum(&ip);
    ip[10..12].copy_from_slice(&sum.to_be_bytes());
    out.extend_from_slice(&ip);
    let mut tcp = [0u8; 20];
    tcp[0..2].copy_from_slice(&p.src_port.to_be_bytes());
    tcp[2..4].copy_from_slice(&p.dst_port.to_be_bytes());
    tcp[12] = 5 << 4;
    tcp[13] = p.flags.to_header_byte();
    tcp[14..16].copy_from_slice(&0xffffu16.to_be_bytes());
    out.extend_from_slice(&tcp);
}

/// Little-endian classic pcap of the packets' headers.
///
/// Payload sizes above 65495 bytes do not fit an IPv4 total length and are
/// saturated.
pub fn write_pcap<'a>(packets: impl IntoIterator<Item = &'a RawTcpPacket>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&[0; 8]);
    out.extend_from_slice(&WRITE_SNAPLEN.to_le_bytes());
    out.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
    let mut frame = Vec::with_capacity(64);
    for p in packets {
        frame.clear();
        encode_frame(p, &mut frame);
        let secs = u32::try_from(p.timestamp.secs()).unwrap_or(u32::MAX);
        out.extend_from_slice(&secs.to_le_bytes());
        out.extend_from_slice(&p.timestamp.subsec_micros().to_le_bytes());
        out.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        out.extend_from_slice(&(ETHERNET_HEADER as u32 + 40 + p.payload_size).to_le_bytes());
        out.extend_from_slice(&frame);
    }
    out
}

pub fn raw_of_record(r: &PacketRecord) -> RawTcpPacket {
    RawTcpPacket {
        timestamp: r.timestamp,
        src_ip: r.source_ip,
        src_port: r.source_port,
        dst_ip: r.destination_ip,
        dst_port: r.destination_port,
        flags: r.flags,
        payload_size: r.payload_size,
    }
}

/// One pcap per session, in session order.
pub fn write_session_pcaps(records: &[PacketRecord]) -> Vec<(u32, Vec<u8>)> {
    let mut out: Vec<(u32, Vec<RawTcpPacket>)> = Vec::new();
    for r in records {
        match out.last_mut() {
            Some((s, v)) if *s == r.session_number => v.push(raw_of_record(r)),
            _ => out.push((r.session_number, vec![raw_of_record(r)])),
        }
    }
    out.into_iter().map(|(s, v)| (s, write_pcap(&v))).collect()
}
