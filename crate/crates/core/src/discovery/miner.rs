//! Recursive cut detection on the directly-follows graph.
//!
//! Activities are interned as indices into the sorted alphabet of the input
//! log, so "smallest label" and "smallest index" coincide and every
//! tie-break below is deterministic.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use super::dfg::DirectlyFollowsGraph;
use super::tree::ProcessTree;
use crate::log::{Activity, EventLog};

/// Relative edge-frequency threshold used when none is configured.
pub const DEFAULT_NOISE_THRESHOLD: f64 = 0.2;

type Seq = Vec<usize>;
type SubLog = BTreeMap<Seq, usize>;
type Dfg = DirectlyFollowsGraph<usize>;
type Part = BTreeSet<usize>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CutKind {
    Exclusive,
    Sequence,
    Parallel,
    Loop,
}

/// Discover a process tree.
///
/// With `noise_threshold = 0` every trace of `log` is replayable on the
/// compiled tree. Larger thresholds let infrequent directly-follows edges be
/// ignored when no cut exists on the complete graph.
pub fn inductive_miner(log: &EventLog, noise_threshold: f64) -> ProcessTree {
    let alphabet = log.alphabet();
    let index: BTreeMap<&Activity, usize> = alphabet.iter().enumerate().map(|(i, a)| (a, i)).collect();
    let mut sublog = SubLog::new();
    for t in &log.traces {
        *sublog.entry(t.events.iter().map(|e| index[e]).collect()).or_default() += 1;
    }
    Miner { alphabet: &alphabet, noise: noise_threshold }.mine(&sublog)
}

struct Miner<'a> {
    alphabet: &'a [Activity],
    noise: f64,
}

impl Miner<'_> {
    fn leaf(&self, a: usize) -> ProcessTree {
        ProcessTree::Activity(self.alphabet[a].clone())
    }

    fn mine(&self, log: &SubLog) -> ProcessTree {
        let total: usize = log.values().sum();
        if total == 0 {
            return ProcessTree::Silent;
        }
        let empty = log.get(&Vec::new()).copied().unwrap_or(0);
        if empty > 0 {
            let mut rest = log.clone();
            rest.remove(&Vec::new());
            if empty == total {
                return ProcessTree::Silent;
            }
            if self.noise > 0.0 && (empty as f64) < self.noise * total as f64 {
                return self.mine(&rest);
            }
            return ProcessTree::Exclusive(vec![ProcessTree::Silent, self.mine(&rest)]);
        }

        let dfg = Dfg::from_weighted(log.iter().map(|(s, n)| (&s[..], *n)));
        if dfg.activities.len() == 1 && log.keys().all(|s| s.len() == 1) {
            return self.leaf(*dfg.activities.first().expect("one activity"));
        }

        let mut found = find_cut(&dfg);
        if found.is_none() && self.noise > 0.0 {
            found = find_cut(&dfg.filtered(self.noise));
        }
        match found {
            Some((kind, parts)) => {
                let children = split(kind, &parts, log).iter().map(|sub| self.mine(sub)).collect();
                match kind {
                    CutKind::Exclusive => ProcessTree::Exclusive(children),
                    CutKind::Sequence => ProcessTree::Sequence(children),
                    CutKind::Parallel => ProcessTree::Parallel(children),
                    CutKind::Loop => ProcessTree::Loop(children),
                }
            }
            None => {
                let mut children = vec![ProcessTree::Silent];
                children.extend(dfg.activities.iter().map(|a| self.leaf(*a)));
                ProcessTree::Loop(children)
            }
        }
    }
}

fn find_cut(dfg: &Dfg) -> Option<(CutKind, Vec<Part>)> {
    if let Some(p) = exclusive_cut(dfg) {
        return Some((CutKind::Exclusive, p));
    }
    if let Some(p) = sequence_cut(dfg) {
        return Some((CutKind::Sequence, p));
    }
    if let Some(p) = parallel_cut(dfg) {
        return Some((CutKind::Parallel, p));
    }
    loop_cut(dfg).map(|p| (CutKind::Loop, p))
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut c = x;
        while self.0[c] != r {
            let next = self.0[c];
            self.0[c] = r;
            c = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        // keep the smaller root so components are named by their minimum
        if ra < rb {
            self.0[rb] = ra;
        } else if rb < ra {
            self.0[ra] = rb;
        }
    }
}

/// Group `nodes` by union-find root; parts ordered by smallest member.
fn groups(nodes: &Part, uf: &mut UnionFind) -> Vec<Part> {
    let mut by_root: BTreeMap<usize, Part> = BTreeMap::new();
    for &n in nodes {
        by_root.entry(uf.find(n)).or_default().insert(n);
    }
    let mut parts: Vec<Part> = by_root.into_values().collect();
    parts.sort_by_key(|p| *p.first().expect("non-empty part"));
    parts
}

fn universe(dfg: &Dfg) -> usize {
    dfg.activities.last().map_or(0, |a| a + 1)
}

fn exclusive_cut(dfg: &Dfg) -> Option<Vec<Part>> {
    let mut uf = UnionFind::new(universe(dfg));
    for (a, b) in dfg.edges.keys() {
        uf.union(*a, *b);
    }
    let parts = groups(&dfg.activities, &mut uf);
    (parts.len() >= 2).then_some(parts)
}

/// `reach[a]` holds every activity reachable from `a` by one or more edges.
fn reachability(dfg: &Dfg) -> Vec<Part> {
    let n = universe(dfg);
    let mut succ = vec![Vec::new(); n];
    for (a, b) in dfg.edges.keys() {
        succ[*a].push(*b);
    }
    let mut reach = vec![Part::new(); n];
    for &start in &dfg.activities {
        let mut stack: Vec<usize> = succ[start].clone();
        while let Some(v) = stack.pop() {
            if reach[start].insert(v) {
                stack.extend(succ[v].iter().copied());
            }
        }
    }
    reach
}

fn sequence_cut(dfg: &Dfg) -> Option<Vec<Part>> {
    let reach = reachability(dfg);
    let acts: Vec<usize> = dfg.activities.iter().copied().collect();
    let mut uf = UnionFind::new(universe(dfg));
    for (i, &a) in acts.iter().enumerate() {
        for &b in &acts[i + 1..] {
            let ab = reach[a].contains(&b);
            let ba = reach[b].contains(&a);
            // same strongly connected component, or unordered
            if ab == ba {
                uf.union(a, b);
            }
        }
    }
    let mut parts = groups(&dfg.activities, &mut uf);
    if parts.len() < 2 {
        return None;
    }
    let precedes = |x: &Part, y: &Part| x.iter().any(|a| y.iter().any(|b| reach[*a].contains(b)));
    let mut rank: Vec<(usize, Part)> = parts
        .drain(..)
        .map(|p| (0, p))
        .collect();
    let snapshot: Vec<Part> = rank.iter().map(|(_, p)| p.clone()).collect();
    for (r, p) in rank.iter_mut() {
        *r = snapshot.iter().filter(|q| *q != p && precedes(p, q)).count();
    }
    rank.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.first().cmp(&b.1.first())));
    let ordered: Vec<Part> = rank.into_iter().map(|(_, p)| p).collect();
    for (i, earlier) in ordered.iter().enumerate() {
        for later in &ordered[i + 1..] {
            for a in earlier {
                for b in later {
                    if !reach[*a].contains(b) || reach[*b].contains(a) {
                        return None;
                    }
                }
            }
        }
    }
    Some(ordered)
}

fn parallel_cut(dfg: &Dfg) -> Option<Vec<Part>> {
    let acts: Vec<usize> = dfg.activities.iter().copied().collect();
    let mut uf = UnionFind::new(universe(dfg));
    for (i, &a) in acts.iter().enumerate() {
        for &b in &acts[i + 1..] {
            if !(dfg.has_edge(&a, &b) && dfg.has_edge(&b, &a)) {
                uf.union(a, b);
            }
        }
    }
    let parts = groups(&dfg.activities, &mut uf);
    let complete =
        |p: &Part| p.iter().any(|a| dfg.start_activities.contains_key(a)) && p.iter().any(|a| dfg.end_activities.contains_key(a));
    let (mut good, bad): (Vec<Part>, Vec<Part>) = parts.into_iter().partition(complete);
    if good.len() < 2 {
        return None;
    }
    for p in bad {
        good[0].extend(p);
    }
    good.sort_by_key(|p| *p.first().expect("non-empty part"));
    Some(good)
}

fn loop_cut(dfg: &Dfg) -> Option<Vec<Part>> {
    let starts: Part = dfg.start_activities.keys().copied().collect();
    let ends: Part = dfg.end_activities.keys().copied().collect();
    if starts.is_empty() || ends.is_empty() {
        return None;
    }
    let mut body: Part = starts.union(&ends).copied().collect();
    let rest: Part = dfg.activities.difference(&body).copied().collect();
    if rest.is_empty() {
        return None;
    }
    let mut uf = UnionFind::new(universe(dfg));
    for (a, b) in dfg.edges.keys() {
        if rest.contains(a) && rest.contains(b) {
            uf.union(*a, *b);
        }
    }
    let mut redo = Vec::new();
    for part in groups(&rest, &mut uf) {
        let mut ok = true;
        for (a, b) in dfg.edges.keys() {
            // body -> redo only from end activities
            if body.contains(a) && part.contains(b) && !ends.contains(a) {
                ok = false;
            }
            // redo -> body only into start activities
            if part.contains(a) && body.contains(b) && !starts.contains(b) {
                ok = false;
            }
        }
        for &x in &part {
            let to_start = starts.iter().filter(|s| dfg.has_edge(&x, s)).count();
            if to_start > 0 && to_start < starts.len() {
                ok = false;
            }
            let from_end = ends.iter().filter(|e| dfg.has_edge(e, &x)).count();
            if from_end > 0 && from_end < ends.len() {
                ok = false;
            }
        }
        if ok {
            redo.push(part);
        } else {
            body.extend(part);
        }
    }
    if redo.is_empty() {
        return None;
    }
    let mut parts = vec![body];
    parts.extend(redo);
    Some(parts)
}

fn part_of(parts: &[Part], a: usize) -> Option<usize> {
    parts.iter().position(|p| p.contains(&a))
}

fn add(log: &mut SubLog, seq: Seq, n: usize) {
    *log.entry(seq).or_default() += n;
}

fn split(kind: CutKind, parts: &[Part], log: &SubLog) -> Vec<SubLog> {
    let mut out = vec![SubLog::new(); parts.len()];
    for (trace, &n) in log {
        match kind {
            CutKind::Exclusive => {
                // part covering most events; ties to the earlier part
                let mut counts = vec![0usize; parts.len()];
                trace.iter().filter_map(|a| part_of(parts, *a)).for_each(|i| counts[i] += 1);
                let best = (0..parts.len()).fold(0, |b, i| if counts[i] > counts[b] { i } else { b });
                add(&mut out[best], trace.iter().copied().filter(|a| parts[best].contains(a)).collect(), n);
            }
            CutKind::Sequence => {
                for (i, seg) in sequence_segments(parts, trace).into_iter().enumerate() {
                    add(&mut out[i], seg, n);
                }
            }
            CutKind::Parallel => {
                for (i, p) in parts.iter().enumerate() {
                    add(&mut out[i], trace.iter().copied().filter(|a| p.contains(a)).collect(), n);
                }
            }
            CutKind::Loop => {
                let mut expect_body = true;
                let mut i = 0;
                while i < trace.len() {
                    let part = part_of(parts, trace[i]).unwrap_or(0);
                    let start = i;
                    while i < trace.len() && part_of(parts, trace[i]).unwrap_or(0) == part {
                        i += 1;
                    }
                    let run: Seq = trace[start..i].to_vec();
                    if part == 0 {
                        add(&mut out[0], run, n);
                        expect_body = false;
                    } else {
                        if expect_body {
                            add(&mut out[0], Vec::new(), n);
                        }
                        add(&mut out[part], run, n);
                        expect_body = true;
                    }
                }
                if expect_body {
                    add(&mut out[0], Vec::new(), n);
                }
            }
        }
    }
    out
}

/// Cut `trace` into one segment per part with non-decreasing part index,
/// minimizing the events that land outside their part's alphabet. Those
/// events are dropped from the returned segments.
fn sequence_segments(parts: &[Part], trace: &[usize]) -> Vec<Seq> {
    let (len, k) = (trace.len(), parts.len());
    let miss = |pos: usize, part: usize| usize::from(!parts[part].contains(&trace[pos]));
    // cost[i][j]: best cost for the first i events using parts 0..=j
    let mut cost = vec![vec![0usize; k]; len + 1];
    for i in 1..=len {
        for j in 0..k {
            let stay = cost[i - 1][j] + miss(i - 1, j);
            cost[i][j] = if j > 0 { stay.min(cost[i][j - 1]) } else { stay };
        }
    }
    let mut segments = vec![Vec::new(); k];
    let (mut i, mut j) = (len, k - 1);
    while i > 0 {
        if j > 0 && cost[i][j] == cost[i][j - 1] {
            j -= 1;
        } else {
            if miss(i - 1, j) == 0 {
                segments[j].push(trace[i - 1]);
            }
            i -= 1;
        }
    }
    segments.iter_mut().for_each(|s| s.reverse());
    segments
}
