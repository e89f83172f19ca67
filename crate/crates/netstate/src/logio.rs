//! State-model JSON, JSONL event logs and XES export.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use netstate_core::log::{EventLog, Trace};
use netstate_core::pipeline::Preprocessing;
use netstate_core::state::{StateId, StateModel, Standardization};
use quick_xml::events::{BytesDecl, Event};
use quick_xml::Writer;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LogIoError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("state model: {0}")]
    MalformedModel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Seventeen significant digits, enough to round-trip any `f64`.
fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn reals(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| real(*v)).collect();
    format!("[{}]", parts.join(", "))
}

/// JSON document with `k`, `seed`, `window_length`, `feature_means`,
/// `feature_stddevs`, `centroids` and `inertia`.
pub fn state_model_json(p: &Preprocessing) -> String {
    let m = &p.state_model;
    let mut out = String::from("{\n");
    let _ = writeln!(out, "  \"k\": {},", m.k);
    let _ = writeln!(out, "  \"seed\": {},", m.seed);
    let _ = writeln!(out, "  \"window_length\": {},", p.window_length);
    let _ = writeln!(out, "  \"feature_means\": {},", reals(&p.standardization.means));
    let _ = writeln!(out, "  \"feature_stddevs\": {},", reals(&p.standardization.stddevs));
    out.push_str("  \"centroids\": [\n");
    for (i, c) in m.centroids.iter().enumerate() {
        let sep = if i + 1 == m.centroids.len() { "" } else { "," };
        let _ = writeln!(out, "    {}{sep}", reals(c));
    }
    out.push_str("  ],\n");
    let _ = writeln!(out, "  \"inertia\": {}", real(m.inertia));
    out.push_str("}\n");
    out
}

#[derive(Deserialize)]
struct ModelDoc {
    k: usize,
    seed: u64,
    window_length: usize,
    feature_means: Vec<f64>,
    feature_stddevs: Vec<f64>,
    centroids: Vec<Vec<f64>>,
    #[serde(default)]
    inertia: f64,
}

pub fn parse_state_model(text: &str) -> Result<Preprocessing, LogIoError> {
    let bad = |m: String| LogIoError::MalformedModel(m);
    let doc: ModelDoc = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    let dims = doc.feature_means.len();
    if doc.feature_stddevs.len() != dims || doc.centroids.iter().any(|c| c.len() != dims) {
        return Err(bad("feature dimensions disagree".into()));
    }
    if doc.centroids.len() != doc.k || doc.k == 0 {
        return Err(bad(format!("expected {} centroids, found {}", doc.k, doc.centroids.len())));
    }
    if doc.window_length < 2 {
        return Err(bad("window_length must be at least 2".into()));
    }
    Ok(Preprocessing {
        window_length: doc.window_length,
        standardization: Standardization { means: doc.feature_means, stddevs: doc.feature_stddevs },
        state_model: StateModel { k: doc.k, seed: doc.seed, centroids: doc.centroids, inertia: doc.inertia },
    })
}

pub fn write_jsonl<W: Write>(log: &EventLog, mut out: W) -> Result<(), LogIoError> {
    for t in &log.traces {
        let line = serde_json::to_string(t).map_err(std::io::Error::other)?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(state: StateId, input: R) -> Result<EventLog, LogIoError> {
    let mut log = EventLog::new(state);
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let trace: Trace =
            serde_json::from_str(&line).map_err(|e| LogIoError::MalformedLine { line: i + 1, reason: e.to_string() })?;
        log.traces.push(trace);
    }
    Ok(log)
}

fn string_attr(w: &mut Writer<&mut Vec<u8>>, value: &str) -> std::io::Result<()> {
    w.create_element("string").with_attribute(("key", "concept:name")).with_attribute(("value", value)).write_empty()?;
    Ok(())
}

/// IEEE XES document; trace names are `device/session/window`.
pub fn xes_bytes(log: &EventLog) -> Vec<u8> {
    let mut buf = Vec::new();
    let mut w = Writer::new_with_indent(&mut buf, b' ', 2);
    let result: std::io::Result<()> = (|| {
        w.write_event(Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)))?;
        w.create_element("log")
            .with_attribute(("xes.version", "1.0"))
            .with_attribute(("xmlns", "http://www.xes-standard.org/"))
            .write_inner_content(|w| {
                w.create_element("extension")
                    .with_attribute(("name", "Concept"))
                    .with_attribute(("prefix", "concept"))
                    .with_attribute(("uri", "http://www.xes-standard.org/concept.xesext"))
                    .write_empty()?;
                for t in &log.traces {
                    w.create_element("trace").write_inner_content(|w| {
                        let id = &t.trace_id;
                        string_attr(w, &format!("{}/{}/{}", id.device, id.session, id.window))?;
                        for e in &t.events {
                            w.create_element("event").write_inner_content(|w| string_attr(w, e.as_str()))?;
                        }
                        Ok(())
                    })?;
                }
                Ok(())
            })?;
        Ok(())
    })();
    result.expect("writing to memory");
    buf.push(b'\n');
    buf
}
