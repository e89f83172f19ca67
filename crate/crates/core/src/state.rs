//! Traffic-state characterization: z-score standardization, seeded k-means,
//! and the broadcast of window states back onto packets.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::window::WindowStats;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error("no input rows")]
    EmptyInput,
    #[error("expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{points} points cannot form {k} clusters")]
    TooFewPoints { points: usize, k: usize },
    #[error("only {distinct} distinct points for {k} clusters")]
    TooFewDistinctPoints { distinct: usize, k: usize },
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("{windows} windows but {assignments} state assignments")]
    LengthMismatch { windows: usize, assignments: usize },
    #[error("window {0} refers to packets outside the record sequence")]
    WindowOutOfRange(usize),
}

/// One-based traffic state identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub u32);

impl StateId {
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(index: usize) -> Self {
        StateId(index as u32 + 1)
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Per-feature z-score parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub stddevs: Vec<f64>,
}

impl Standardization {
    /// Fit means and population standard deviations.
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, StateError> {
        let first = rows.first().ok_or(StateError::EmptyInput)?;
        let dims = first.as_ref().len();
        let n = rows.len() as f64;
        let mut means = vec![0.0; dims];
        for row in rows {
            let row = check_dims(row.as_ref(), dims)?;
            for (m, x) in means.iter_mut().zip(row) {
                *m += x;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; dims];
        for row in rows {
            for ((v, x), m) in vars.iter_mut().zip(row.as_ref()).zip(&means) {
                *v += (x - m) * (x - m);
            }
        }
        let stddevs = vars.into_iter().map(|v| libm::sqrt(v / n)).collect();
        Ok(Standardization { means, stddevs })
    }

    pub fn fit_windows(windows: &[WindowStats]) -> Result<Self, StateError> {
        let rows: Vec<&[f64]> = windows.iter().map(|w| &w.features[..]).collect();
        Self::fit(&rows)
    }

    pub fn dims(&self) -> usize {
        self.means.len()
    }

    pub fn is_constant(&self, feature: usize) -> bool {
        self.stddevs[feature] == 0.0
    }

    pub fn constant_features(&self) -> Vec<usize> {
        (0..self.dims()).filter(|&i| self.is_constant(i)).collect()
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>, StateError> {
        let x = check_dims(x, self.dims())?;
        Ok(x.iter()
            .zip(self.means.iter().zip(&self.stddevs))
            .map(|(x, (m, s))| if *s == 0.0 { 0.0 } else { (x - m) / s })
            .collect())
    }

    /// Inverse transform; constant features come back as their mean.
    pub fn inverse(&self, z: &[f64]) -> Result<Vec<f64>, StateError> {
        let z = check_dims(z, self.dims())?;
        Ok(z.iter().zip(self.means.iter().zip(&self.stddevs)).map(|(z, (m, s))| z * s + m).collect())
    }

    pub fn apply<R: AsRef<[f64]>>(&self, rows: &[R]) -> Result<Vec<Vec<f64>>, StateError> {
        rows.iter().map(|r| self.transform(r.as_ref())).collect()
    }

    pub fn apply_windows(&self, windows: &[WindowStats]) -> Result<Vec<Vec<f64>>, StateError> {
        windows.iter().map(|w| self.transform(&w.features)).collect()
    }
}

fn check_dims(x: &[f64], expected: usize) -> Result<&[f64], StateError> {
    if x.len() != expected {
        return Err(StateError::DimensionMismatch { expected, got: x.len() });
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansParams { k, seed, max_iter: 300, tol: 1e-6 }
    }
}

/// Cluster centroids defining the state space.
///
/// Centroids are sorted lexicographically, so state `i` is the `i`-th
/// smallest centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateModel {
    pub k: usize,
    pub seed: u64,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
}

impl StateModel {
    pub fn dims(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.k).map(StateId::from_index)
    }

    /// Nearest centroid; ties go to the lowest state id.
    pub fn assign(&self, z: &[f64]) -> Result<StateId, StateError> {
        let z = check_dims(z, self.dims())?;
        Ok(StateId::from_index(nearest(&self.centroids, z).0))
    }

    pub fn assign_all<R: AsRef<[f64]>>(&self, rows: &[R]) -> Result<Vec<StateId>, StateError> {
        rows.iter().map(|r| self.assign(r.as_ref())).collect()
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], z: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(c, z);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn distinct_count(points: &[&[f64]]) -> usize {
    let mut sorted: Vec<&[f64]> = points.to_vec();
    sorted.sort_by(|a, b| lexicographic(a, b));
    sorted.dedup_by(|a, b| lexicographic(a, b).is_eq());
    sorted.len()
}

/// Fit k-means and return the canonicalized model.
pub fn fit_kmeans<R: AsRef<[f64]>>(points: &[R], params: KMeansParams) -> Result<StateModel, StateError> {
    fit_kmeans_traced(points, params).map(|(m, _)| m)
}

/// Like [`fit_kmeans`], also returning the inertia after every assignment step.
pub fn fit_kmeans_traced<R: AsRef<[f64]>>(
    points: &[R],
    params: KMeansParams,
) -> Result<(StateModel, Vec<f64>), StateError> {
    let KMeansParams { k, seed, max_iter, tol } = params;
    if k < 2 {
        return Err(StateError::InvalidK(k));
    }
    if points.len() < k {
        return Err(StateError::TooFewPoints { points: points.len(), k });
    }
    let pts: Vec<&[f64]> = points.iter().map(AsRef::as_ref).collect();
    let dims = pts[0].len();
    for p in &pts {
        check_dims(p, dims)?;
    }
    let distinct = distinct_count(&pts);
    if distinct < k {
        return Err(StateError::TooFewDistinctPoints { distinct, k });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(&pts, k, &mut rng);
    // Canonical order throughout, so ties during fitting break the same way
    // as in StateModel::assign.
    centroids.sort_by(|a, b| lexicographic(a, b));
    let mut labels = vec![0usize; pts.len()];
    let mut history = Vec::new();

    for _ in 0..max_iter.max(1) {
        let mut inertia = 0.0;
        for (label, p) in labels.iter_mut().zip(&pts) {
            let (c, d) = nearest(&centroids, p);
            *label = c;
            inertia += d;
        }
        inertia -= repair_empty(&pts, &mut centroids, &mut labels);
        history.push(inertia);

        let mut sums = vec![vec![0.0; dims]; k];
        let mut counts = vec![0usize; k];
        for (l, p) in labels.iter().zip(&pts) {
            counts[*l] += 1;
            for (s, x) in sums[*l].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        let mut shift: f64 = 0.0;
        for ((c, s), n) in centroids.iter_mut().zip(sums).zip(&counts) {
            let updated: Vec<f64> = s.into_iter().map(|v| v / *n as f64).collect();
            shift = shift.max(squared_distance(c, &updated));
            *c = updated;
        }
        centroids.sort_by(|a, b| lexicographic(a, b));
        if libm::sqrt(shift) < tol {
            break;
        }
    }

    let inertia = pts.iter().map(|p| nearest(&centroids, p).1).sum();
    Ok((StateModel { k, seed, centroids, inertia }, history))
}

fn plus_plus_init(pts: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![pts[rng.random_range(0..pts.len())].to_vec()];
    let mut dist: Vec<f64> = pts.iter().map(|p| squared_distance(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, d) in dist.iter().enumerate() {
            if *d > 0.0 {
                pick = Some(i);
                if target < *d {
                    break;
                }
                target -= d;
            }
        }
        // distinct_count >= k guarantees some point is still uncovered
        let chosen = pts[pick.expect("uncovered point")].to_vec();
        for (d, p) in dist.iter_mut().zip(pts) {
            *d = d.min(squared_distance(p, &chosen));
        }
        centroids.push(chosen);
    }
    centroids
}

/// Reseed every empty cluster at the point farthest from its centroid.
/// Returns the inertia removed by the moves.
fn repair_empty(pts: &[&[f64]], centroids: &mut [Vec<f64>], labels: &mut [usize]) -> f64 {
    let mut removed = 0.0;
    loop {
        let mut counts = vec![0usize; centroids.len()];
        labels.iter().for_each(|l| counts[*l] += 1);
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return removed;
        };
        let mut far = (0, -1.0);
        for (i, p) in pts.iter().enumerate() {
            let d = squared_distance(p, &centroids[labels[i]]);
            if d > far.1 {
                far = (i, d);
            }
        }
        centroids[empty] = pts[far.0].to_vec();
        labels[far.0] = empty;
        removed += far.1;
    }
}

/// A packet labeled with the state of its window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledPacket {
    pub packet_index: usize,
    pub window_index: usize,
    pub state: StateId,
}

/// Broadcast each window's state to its `l` packets, in capture order.
/// Packets not covered by any window are left out.
pub fn align_states(
    record_count: usize,
    windows: &[WindowStats],
    assignments: &[StateId],
    window_length: usize,
) -> Result<Vec<LabeledPacket>, StateError> {
    if windows.len() != assignments.len() {
        return Err(StateError::LengthMismatch { windows: windows.len(), assignments: assignments.len() });
    }
    let mut out = Vec::with_capacity(windows.len() * window_length);
    for (w, state) in windows.iter().zip(assignments) {
        if w.first_packet + window_length > record_count {
            return Err(StateError::WindowOutOfRange(w.window_index));
        }
        out.extend((w.first_packet..w.first_packet + window_length).map(|packet_index| LabeledPacket {
            packet_index,
            window_index: w.window_index,
            state: *state,
        }));
    }
    Ok(out)
}
