use alloc::collections::{BTreeMap, BTreeSet};

use crate::log::{Activity, EventLog};

/// Directly-follows relation of a log with edge, start and end counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectlyFollowsGraph<A: Ord = Activity> {
    pub activities: BTreeSet<A>,
    pub edges: BTreeMap<(A, A), usize>,
    pub start_activities: BTreeMap<A, usize>,
    pub end_activities: BTreeMap<A, usize>,
}

impl<A: Ord + Clone> DirectlyFollowsGraph<A> {
    /// Build from `(sequence, multiplicity)` pairs.
    pub fn from_weighted<'a, I>(sequences: I) -> Self
    where
        I: IntoIterator<Item = (&'a [A], usize)>,
        A: 'a,
    {
        let mut dfg = DirectlyFollowsGraph {
            activities: BTreeSet::new(),
            edges: BTreeMap::new(),
            start_activities: BTreeMap::new(),
            end_activities: BTreeMap::new(),
        };
        for (seq, n) in sequences {
            if n == 0 {
                continue;
            }
            dfg.activities.extend(seq.iter().cloned());
            if let (Some(first), Some(last)) = (seq.first(), seq.last()) {
                *dfg.start_activities.entry(first.clone()).or_default() += n;
                *dfg.end_activities.entry(last.clone()).or_default() += n;
            }
            for pair in seq.windows(2) {
                *dfg.edges.entry((pair[0].clone(), pair[1].clone())).or_default() += n;
            }
        }
        dfg
    }

    pub fn has_edge(&self, a: &A, b: &A) -> bool {
        self.edges.contains_key(&(a.clone(), b.clone()))
    }

    /// Drop infrequent outgoing edges, start and end entries.
    ///
    /// An outgoing edge of `a` survives iff its count is at least
    /// `threshold` times the largest outgoing count of `a`, where ending a
    /// trace counts as an outgoing edge. Start and end entries are compared
    /// against their own maxima. Activities stay.
    pub fn filtered(&self, threshold: f64) -> Self {
        let mut max_out: BTreeMap<&A, usize> = BTreeMap::new();
        let outgoing = self.edges.iter().map(|((a, _), n)| (a, n)).chain(self.end_activities.iter());
        for (a, n) in outgoing {
            let m = max_out.entry(a).or_default();
            *m = (*m).max(*n);
        }
        let edges = self
            .edges
            .iter()
            .filter(|((a, _), n)| (**n as f64) >= threshold * max_out[a] as f64)
            .map(|(k, n)| (k.clone(), *n))
            .collect();
        let keep = |m: &BTreeMap<A, usize>| {
            let max = m.values().copied().max().unwrap_or(0) as f64;
            m.iter().filter(|(_, n)| (**n as f64) >= threshold * max).map(|(a, n)| (a.clone(), *n)).collect()
        };
        DirectlyFollowsGraph {
            activities: self.activities.clone(),
            edges,
            start_activities: keep(&self.start_activities),
            end_activities: keep(&self.end_activities),
        }
    }
}

pub fn build_dfg(log: &EventLog) -> DirectlyFollowsGraph {
    DirectlyFollowsGraph::from_weighted(log.traces.iter().map(|t| (&t.events[..], 1)))
}

pub fn filter_dfg(dfg: &DirectlyFollowsGraph, noise_threshold: f64) -> DirectlyFollowsGraph {
    dfg.filtered(noise_threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::StateId;
    use alloc::vec;

    fn a(s: &str) -> Activity {
        Activity::from(s)
    }

    #[test]
    fn repeated_pair() {
        let log = EventLog::from_sequences(StateId(1), vec![vec!["a", "b"]; 3]);
        let dfg = build_dfg(&log);
        assert_eq!(dfg.edges, BTreeMap::from([((a("a"), a("b")), 3)]));
        assert_eq!(dfg.start_activities, BTreeMap::from([(a("a"), 3)]));
        assert_eq!(dfg.end_activities, BTreeMap::from([(a("b"), 3)]));
    }

    #[test]
    fn singleton_trace() {
        let dfg = build_dfg(&EventLog::from_sequences(StateId(1), [["a"]]));
        assert!(dfg.edges.is_empty());
        assert_eq!(dfg.start_activities, dfg.end_activities);
        assert_eq!(dfg.start_activities[&a("a")], 1);
    }

    #[test]
    fn filtering_removes_rare_branch() {
        let mut seqs = vec![vec!["a", "b"]; 9];
        seqs.push(vec!["a", "c"]);
        let dfg = build_dfg(&EventLog::from_sequences(StateId(1), seqs));
        let f = filter_dfg(&dfg, 0.2);
        assert!(f.has_edge(&a("a"), &a("b")));
        assert!(!f.has_edge(&a("a"), &a("c")));
        assert!(f.activities.contains(&a("c")));
        assert!(!f.end_activities.contains_key(&a("c")));
        assert_eq!(filter_dfg(&dfg, 0.0), dfg);
        assert_eq!(filter_dfg(&f, 0.2), f);
    }
}
