//! Report files: every file gets a `*.meta.json` sidecar with the config
//! digest and tool version. Nothing time-dependent is written.

use std::fs;
use std::path::{Path, PathBuf};

use netstate_core::conformance::VariantFitness;
use netstate_core::eval::{RocCurve, StatePmf};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const TOOL: &str = "netstate";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const HEATMAP_FILE: &str = "exp1_heatmap.csv";
pub const CLASSIFICATION_FILE: &str = "exp2_classification.csv";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {reason}", path.display())]
    Malformed { path: PathBuf, reason: String },
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub config_sha256: String,
    pub tool: String,
    pub version: String,
}

/// Writes files below `root`, each with its sidecar.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
    digest: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.to_path_buf(), source }
}

impl OutputDir {
    pub fn new(root: impl Into<PathBuf>, config_digest: impl Into<String>) -> Self {
        OutputDir { root: root.into(), digest: config_digest.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&self, rel: impl AsRef<Path>, bytes: &[u8]) -> Result<PathBuf, ReportError> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        fs::write(&path, bytes).map_err(io_err(&path))?;
        let meta = Meta { config_sha256: self.digest.clone(), tool: TOOL.into(), version: VERSION.into() };
        let mut side = path.clone().into_os_string();
        side.push(".meta.json");
        let side = PathBuf::from(side);
        let mut text = serde_json::to_string_pretty(&meta).expect("meta serializes");
        text.push('\n');
        fs::write(&side, text).map_err(io_err(&side))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, rel: impl AsRef<Path>, value: &T) -> Result<PathBuf, ReportError> {
        let mut text = serde_json::to_string_pretty(value).expect("report serializes");
        text.push('\n');
        self.write(rel, text.as_bytes())
    }
}

fn csv_bytes<R: IntoIterator<Item = Vec<String>>>(header: &[&str], rows: R) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for r in rows {
        w.write_record(&r).expect("writing to memory");
    }
    w.into_inner().expect("writing to memory")
}

/// `variant_id,frequency,cost,fitness,moves`, variants in log order.
pub fn conformance_csv(variants: &[VariantFitness]) -> Vec<u8> {
    csv_bytes(
        &["variant_id", "frequency", "cost", "fitness", "moves"],
        variants.iter().enumerate().map(|(i, v)| {
            vec![
                (i + 1).to_string(),
                v.frequency.to_string(),
                v.alignment.total_cost.to_string(),
                v.fitness.to_string(),
                v.alignment.compact(),
            ]
        }),
    )
}

pub fn roc_csv(curve: &RocCurve) -> Vec<u8> {
    csv_bytes(
        &["threshold", "fpr", "tpr"],
        curve.points.iter().map(|p| vec![p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()]),
    )
}

/// PMF as `{"states": [...], "unknown": p}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmfDoc {
    pub states: Vec<f64>,
    pub unknown: f64,
}

impl From<&StatePmf> for PmfDoc {
    fn from(p: &StatePmf) -> Self {
        PmfDoc { states: p.probabilities[..p.k()].to_vec(), unknown: p.unknown() }
    }
}

/// Summary of one similarity-experiment grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1Cell {
    pub window_length: usize,
    pub k: usize,
    pub sim: f64,
    pub sep: f64,
    pub comp: f64,
    /// Reference devices the metrics were averaged over.
    pub references: Vec<String>,
    pub sim_guarded_terms: usize,
    pub sep_clamped_terms: usize,
}

/// Summary of one classification-experiment grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Cell {
    pub window_length: usize,
    pub k: usize,
    pub intersection: f64,
    pub cosine_similarity: f64,
    pub auc: f64,
    pub own_segments: usize,
    pub foreign_segments: usize,
    pub skipped_segments: usize,
    pub thresholds: Vec<Option<f64>>,
}

pub fn cell_dir(experiment: &str, window_length: usize, k: usize) -> PathBuf {
    PathBuf::from(experiment).join(format!("wl{window_length}_k{k}"))
}

pub fn heatmap_csv(cells: &[Exp1Cell]) -> Vec<u8> {
    csv_bytes(
        &["window_length", "k", "sim", "sep", "comp"],
        cells.iter().map(|c| {
            vec![c.window_length.to_string(), c.k.to_string(), c.sim.to_string(), c.sep.to_string(), c.comp.to_string()]
        }),
    )
}

pub fn classification_csv(cells: &[Exp2Cell]) -> Vec<u8> {
    csv_bytes(
        &["window_length", "k", "intersection", "cosine_similarity", "auc"],
        cells.iter().map(|c| {
            vec![
                c.window_length.to_string(),
                c.k.to_string(),
                c.intersection.to_string(),
                c.cosine_similarity.to_string(),
                c.auc.to_string(),
            ]
        }),
    )
}

fn read_cells<T: for<'de> Deserialize<'de>>(dir: &Path) -> Result<Vec<T>, ReportError> {
    let mut out = Vec::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    let mut entries: Vec<PathBuf> =
        fs::read_dir(dir).map_err(io_err(dir))?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for e in entries {
        let path = e.join("summary.json");
        if !path.is_file() {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let cell = serde_json::from_str(&text).map_err(|e| ReportError::Malformed { path: path.clone(), reason: e.to_string() })?;
        out.push(cell);
    }
    Ok(out)
}

/// Rows found per experiment by [`merge_reports`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MergeSummary {
    pub exp1_cells: usize,
    pub exp2_cells: usize,
}

/// Rebuild the grid tables from the per-cell summaries under `out`.
pub fn merge_reports(out: &OutputDir) -> Result<MergeSummary, ReportError> {
    let mut e1: Vec<Exp1Cell> = read_cells(&out.path("exp1"))?;
    e1.sort_by_key(|c| (c.window_length, c.k));
    let mut e2: Vec<Exp2Cell> = read_cells(&out.path("exp2"))?;
    e2.sort_by_key(|c| (c.window_length, c.k));
    if !e1.is_empty() {
        out.write(HEATMAP_FILE, &heatmap_csv(&e1))?;
    }
    if !e2.is_empty() {
        out.write(CLASSIFICATION_FILE, &classification_csv(&e2))?;
    }
    Ok(MergeSummary { exp1_cells: e1.len(), exp2_cells: e2.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn sidecar_written() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::new(dir.path(), "d1");
        out.write("a/b.csv", b"x\n").unwrap();
        let meta: Meta = serde_json::from_str(&fs::read_to_string(dir.path().join("a/b.csv.meta.json")).unwrap()).unwrap();
        assert_eq!(meta.config_sha256, "d1");
        assert_eq!(meta.version, VERSION);
    }

    #[test]
    fn merge_sorts_cells() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::new(dir.path(), "d");
        for (l, k) in [(3, 2), (2, 3), (2, 2)] {
            let c = Exp1Cell {
                window_length: l,
                k,
                sim: 1.0,
                sep: 0.5,
                comp: 0.0,
                references: vec![],
                sim_guarded_terms: 0,
                sep_clamped_terms: 0,
            };
            out.write_json(cell_dir("exp1", l, k).join("summary.json"), &c).unwrap();
        }
        assert_eq!(merge_reports(&out).unwrap(), MergeSummary { exp1_cells: 3, exp2_cells: 0 });
        let text = fs::read_to_string(dir.path().join(HEATMAP_FILE)).unwrap();
        let keys: Vec<&str> = text.lines().skip(1).map(|l| &l[..3]).collect();
        assert_eq!(keys, ["2,2", "2,3", "3,2"]);
    }
}
