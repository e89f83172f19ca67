//! Place/transition nets with multiset markings.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::log::Activity;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PetriError {
    #[error("place {0} does not exist")]
    UnknownPlace(usize),
    #[error("transition {0} does not exist")]
    UnknownTransition(usize),
    #[error("transition {0} is not enabled")]
    NotEnabled(usize),
    #[error("net has no nodes")]
    EmptyNet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PlaceId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TransitionId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Place {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub name: String,
    /// `None` for silent transitions.
    pub label: Option<Activity>,
}

impl Transition {
    pub fn is_silent(&self) -> bool {
        self.label.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Arc {
    Input(PlaceId, TransitionId),
    Output(TransitionId, PlaceId),
}

/// Token counts per place; places with no tokens are absent.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Marking(BTreeMap<PlaceId, u32>);

impl Marking {
    pub fn new() -> Self {
        Marking(BTreeMap::new())
    }

    pub fn single(place: PlaceId) -> Self {
        let mut m = Marking::new();
        m.add(place, 1);
        m
    }

    pub fn tokens(&self, place: PlaceId) -> u32 {
        self.0.get(&place).copied().unwrap_or(0)
    }

    pub fn add(&mut self, place: PlaceId, n: u32) {
        if n > 0 {
            *self.0.entry(place).or_default() += n;
        }
    }

    /// Remove one token; returns false when the place is empty.
    pub fn take(&mut self, place: PlaceId) -> bool {
        match self.0.get_mut(&place) {
            Some(n) if *n > 1 => {
                *n -= 1;
                true
            }
            Some(_) => {
                self.0.remove(&place);
                true
            }
            None => false,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (PlaceId, u32)> + '_ {
        self.0.iter().map(|(p, n)| (*p, *n))
    }

    pub fn total(&self) -> u64 {
        self.0.values().map(|n| u64::from(*n)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(PlaceId, u32)> for Marking {
    fn from_iter<I: IntoIterator<Item = (PlaceId, u32)>>(iter: I) -> Self {
        let mut m = Marking::new();
        for (p, n) in iter {
            m.add(p, n);
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PetriNet {
    pub places: Vec<Place>,
    pub transitions: Vec<Transition>,
    pub arcs: Vec<Arc>,
    pub initial_marking: Marking,
    pub final_marking: Marking,
}

impl PetriNet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_place(&mut self, name: impl Into<String>) -> PlaceId {
        self.places.push(Place { name: name.into() });
        PlaceId(self.places.len() - 1)
    }

    pub fn add_transition(&mut self, name: impl Into<String>, label: Option<Activity>) -> TransitionId {
        self.transitions.push(Transition { name: name.into(), label });
        TransitionId(self.transitions.len() - 1)
    }

    /// Add an arc; duplicates are ignored since arcs carry no weight.
    pub fn add_arc(&mut self, arc: Arc) -> Result<(), PetriError> {
        let (p, t) = match arc {
            Arc::Input(p, t) | Arc::Output(t, p) => (p, t),
        };
        if p.0 >= self.places.len() {
            return Err(PetriError::UnknownPlace(p.0));
        }
        if t.0 >= self.transitions.len() {
            return Err(PetriError::UnknownTransition(t.0));
        }
        if !self.arcs.contains(&arc) {
            self.arcs.push(arc);
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.places.len() + self.transitions.len()
    }

    pub fn preset(&self, t: TransitionId) -> impl Iterator<Item = PlaceId> + '_ {
        self.arcs.iter().filter_map(move |a| match *a {
            Arc::Input(p, tt) if tt == t => Some(p),
            _ => None,
        })
    }

    pub fn postset(&self, t: TransitionId) -> impl Iterator<Item = PlaceId> + '_ {
        self.arcs.iter().filter_map(move |a| match *a {
            Arc::Output(tt, p) if tt == t => Some(p),
            _ => None,
        })
    }

    fn check_marking(&self, marking: &Marking) -> Result<(), PetriError> {
        match marking.iter().find(|(p, _)| p.0 >= self.places.len()) {
            Some((p, _)) => Err(PetriError::UnknownPlace(p.0)),
            None => Ok(()),
        }
    }

    pub fn is_enabled(&self, marking: &Marking, t: TransitionId) -> Result<bool, PetriError> {
        self.check_marking(marking)?;
        if t.0 >= self.transitions.len() {
            return Err(PetriError::UnknownTransition(t.0));
        }
        Ok(self.preset(t).all(|p| marking.tokens(p) >= 1))
    }

    /// Transitions whose input places all hold a token, in id order.
    pub fn enabled(&self, marking: &Marking) -> Result<Vec<TransitionId>, PetriError> {
        self.check_marking(marking)?;
        Ok((0..self.transitions.len())
            .map(TransitionId)
            .filter(|t| self.preset(*t).all(|p| marking.tokens(p) >= 1))
            .collect())
    }

    pub fn fire(&self, marking: &Marking, t: TransitionId) -> Result<Marking, PetriError> {
        if !self.is_enabled(marking, t)? {
            return Err(PetriError::NotEnabled(t.0));
        }
        let mut next = marking.clone();
        for p in self.preset(t) {
            next.take(p);
        }
        for p in self.postset(t) {
            next.add(p, 1);
        }
        Ok(next)
    }

    /// Simplicity score in `[0, 1]` from the mean node degree `d`:
    /// `1 / (1 + max(0, d - 2))`. Purely sequential nets score 1.
    pub fn arc_degree(&self) -> Result<f64, PetriError> {
        let nodes = self.node_count();
        if nodes == 0 {
            return Err(PetriError::EmptyNet);
        }
        let mean_degree = 2.0 * self.arcs.len() as f64 / nodes as f64;
        Ok(1.0 / (1.0 + (mean_degree - 2.0).max(0.0)))
    }

    /// Places without incoming arcs.
    pub fn source_places(&self) -> Vec<PlaceId> {
        let targets: BTreeSet<PlaceId> = self
            .arcs
            .iter()
            .filter_map(|a| match a {
                Arc::Output(_, p) => Some(*p),
                _ => None,
            })
            .collect();
        (0..self.places.len()).map(PlaceId).filter(|p| !targets.contains(p)).collect()
    }

    /// Places without outgoing arcs.
    pub fn sink_places(&self) -> Vec<PlaceId> {
        let origins: BTreeSet<PlaceId> = self
            .arcs
            .iter()
            .filter_map(|a| match a {
                Arc::Input(p, _) => Some(*p),
                _ => None,
            })
            .collect();
        (0..self.places.len()).map(PlaceId).filter(|p| !origins.contains(p)).collect()
    }

    /// Unique source and sink, matching markings, every node on a
    /// source-to-sink path.
    pub fn is_workflow_net(&self) -> bool {
        let (sources, sinks) = (self.source_places(), self.sink_places());
        if sources.len() != 1 || sinks.len() != 1 {
            return false;
        }
        if self.initial_marking != Marking::single(sources[0]) || self.final_marking != Marking::single(sinks[0]) {
            return false;
        }
        // node ids: places 0..P, transitions P..P+T
        let np = self.places.len();
        let n = self.node_count();
        let mut fwd = vec![Vec::new(); n];
        let mut back = vec![Vec::new(); n];
        for a in &self.arcs {
            let (from, to) = match *a {
                Arc::Input(p, t) => (p.0, np + t.0),
                Arc::Output(t, p) => (np + t.0, p.0),
            };
            fwd[from].push(to);
            back[to].push(from);
        }
        let reach = |start: usize, adj: &[Vec<usize>]| {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(v) = queue.pop_front() {
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
            seen
        };
        let from_source = reach(sources[0].0, &fwd);
        let to_sink = reach(sinks[0].0, &back);
        from_source.iter().zip(&to_sink).all(|(a, b)| *a && *b)
    }

    /// Breadth-first reachability from the initial marking.
    ///
    /// Returns `None` when more than `limit` markings are reachable.
    pub fn reachable_markings(&self, limit: usize) -> Option<BTreeSet<Marking>> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::new();
        seen.insert(self.initial_marking.clone());
        queue.push_back(self.initial_marking.clone());
        while let Some(m) = queue.pop_front() {
            for t in self.enabled(&m).ok()? {
                let next = self.fire(&m, t).ok()?;
                if !seen.contains(&next) {
                    if seen.len() >= limit {
                        return None;
                    }
                    seen.insert(next.clone());
                    queue.push_back(next);
                }
            }
        }
        Some(seen)
    }

    pub fn labels(&self) -> BTreeSet<&Activity> {
        self.transitions.iter().filter_map(|t| t.label.as_ref()).collect()
    }
}
