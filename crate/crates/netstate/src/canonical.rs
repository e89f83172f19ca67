//! Canonical packet CSV and window-statistics CSV.

use std::io::{Read, Write};

use netstate_core::packet::{Direction, PacketRecord, TcpFlags, Timestamp};
use netstate_core::window::{WindowStats, FEATURE_NAMES};
use thiserror::Error;

pub const RECORD_HEADER: [&str; 9] = [
    "timestamp",
    "direction",
    "source_ip",
    "source_port",
    "destination_ip",
    "destination_port",
    "session_number",
    "tcp_flag",
    "payload_size",
];

#[derive(Debug, Error)]
pub enum CanonicalError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn malformed(line: u64, reason: impl Into<String>) -> CanonicalError {
    CanonicalError::MalformedRow { line, reason: reason.into() }
}

pub fn write_canonical<W: Write>(records: &[PacketRecord], out: W) -> Result<(), CanonicalError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(RECORD_HEADER)?;
    for r in records {
        w.write_record([
            r.timestamp.to_string(),
            r.direction.token().to_string(),
            r.source_ip.to_string(),
            r.source_port.to_string(),
            r.destination_ip.to_string(),
            r.destination_port.to_string(),
            r.session_number.to_string(),
            r.flags.canonical(),
            r.payload_size.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn canonical_bytes(records: &[PacketRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    write_canonical(records, &mut out).expect("writing to memory");
    out
}

pub fn read_canonical<R: Read>(input: R) -> Result<Vec<PacketRecord>, CanonicalError> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(input);
    let mut rows = r.records();
    match rows.next() {
        None => return Err(malformed(1, "missing header row")),
        Some(h) => {
            let h = h?;
            if h.iter().ne(RECORD_HEADER) {
                return Err(malformed(1, format!("header must be {}", RECORD_HEADER.join(","))));
            }
        }
    }
    let mut out = Vec::new();
    for row in rows {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != RECORD_HEADER.len() {
            return Err(malformed(line, format!("expected 9 columns, found {}", row.len())));
        }
        let field = |i: usize| &row[i];
        let parse_err = |name: &str, value: &str| malformed(line, format!("bad {name} {value:?}"));
        let num = |i: usize| field(i).parse::<u64>().map_err(|_| parse_err(RECORD_HEADER[i], field(i)));
        let port = |i: usize| field(i).parse::<u16>().map_err(|_| parse_err(RECORD_HEADER[i], field(i)));
        let ip = |i: usize| field(i).parse().map_err(|_| parse_err(RECORD_HEADER[i], field(i)));
        let session = u32::try_from(num(6)?).map_err(|_| parse_err("session_number", field(6)))?;
        if session == 0 {
            return Err(malformed(line, "session_number must be at least 1"));
        }
        out.push(PacketRecord {
            timestamp: field(0).parse::<Timestamp>().map_err(|e| malformed(line, e.to_string()))?,
            direction: field(1).parse::<Direction>().map_err(|e| malformed(line, e.to_string()))?,
            source_ip: ip(2)?,
            source_port: port(3)?,
            destination_ip: ip(4)?,
            destination_port: port(5)?,
            session_number: session,
            flags: TcpFlags::parse(field(7)).map_err(|e| malformed(line, e.to_string()))?,
            payload_size: u32::try_from(num(8)?).map_err(|_| parse_err("payload_size", field(8)))?,
        });
    }
    Ok(out)
}

pub fn write_windows<W: Write>(windows: &[WindowStats], out: W) -> Result<(), CanonicalError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header = vec!["window_index", "session_number"];
    header.extend(FEATURE_NAMES);
    w.write_record(&header)?;
    for s in windows {
        let mut row = vec![s.window_index.to_string(), s.session_number.to_string()];
        row.extend(s.features.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
