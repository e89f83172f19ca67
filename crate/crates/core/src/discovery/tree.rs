use alloc::borrow::ToOwned;
use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::log::Activity;

/// Block-structured process model.
///
/// `Loop(children)` executes `children[0]`, then any number of times one of
/// the remaining children followed by `children[0]` again.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProcessTree {
    Activity(Activity),
    Silent,
    Sequence(Vec<ProcessTree>),
    Exclusive(Vec<ProcessTree>),
    Parallel(Vec<ProcessTree>),
    Loop(Vec<ProcessTree>),
}

impl ProcessTree {
    pub fn activity(label: &str) -> Self {
        ProcessTree::Activity(Activity::from(label))
    }

    pub fn children(&self) -> &[ProcessTree] {
        match self {
            ProcessTree::Activity(_) | ProcessTree::Silent => &[],
            ProcessTree::Sequence(c) | ProcessTree::Exclusive(c) | ProcessTree::Parallel(c) | ProcessTree::Loop(c) => c,
        }
    }

    /// Every operator has at least two children.
    pub fn is_valid(&self) -> bool {
        match self {
            ProcessTree::Activity(_) | ProcessTree::Silent => true,
            _ => self.children().len() >= 2 && self.children().iter().all(Self::is_valid),
        }
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(Self::depth).max().unwrap_or(0)
    }

    /// Labels of the activity leaves.
    pub fn activities(&self) -> BTreeSet<&Activity> {
        let mut out = BTreeSet::new();
        self.collect_activities(&mut out);
        out
    }

    fn collect_activities<'a>(&'a self, out: &mut BTreeSet<&'a Activity>) {
        match self {
            ProcessTree::Activity(a) => {
                out.insert(a);
            }
            _ => self.children().iter().for_each(|c| c.collect_activities(out)),
        }
    }

    /// Visit every node, parents before children.
    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a ProcessTree)) {
        visit(self);
        for c in self.children() {
            c.walk(visit);
        }
    }

    /// Draw one trace by playing out the tree. Loops repeat a redo part
    /// with probability `redo_probability` at each opportunity, at most
    /// `max_redos` times.
    pub fn sample_trace<R: Rng + ?Sized>(&self, rng: &mut R, redo_probability: f64, max_redos: usize) -> Vec<Activity> {
        let mut out = Vec::new();
        self.sample_into(rng, redo_probability, max_redos, &mut out);
        out
    }

    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, p: f64, max: usize, out: &mut Vec<Activity>) {
        match self {
            ProcessTree::Activity(a) => out.push(a.clone()),
            ProcessTree::Silent => {}
            ProcessTree::Sequence(c) => c.iter().for_each(|t| t.sample_into(rng, p, max, out)),
            ProcessTree::Exclusive(c) => c[rng.random_range(0..c.len())].sample_into(rng, p, max, out),
            ProcessTree::Parallel(c) => {
                let mut parts: Vec<Vec<Activity>> = c.iter().map(|t| t.sample_trace(rng, p, max)).collect();
                parts.iter_mut().for_each(|v| v.reverse());
                loop {
                    let live: Vec<usize> = (0..parts.len()).filter(|&i| !parts[i].is_empty()).collect();
                    if live.is_empty() {
                        break;
                    }
                    let pick = live[rng.random_range(0..live.len())];
                    out.push(parts[pick].pop().expect("non-empty part"));
                }
            }
            ProcessTree::Loop(c) => {
                c[0].sample_into(rng, p, max, out);
                let mut redos = 0;
                while redos < max && rng.random::<f64>() < p {
                    c[1 + rng.random_range(0..c.len() - 1)].sample_into(rng, p, max, out);
                    c[0].sample_into(rng, p, max, out);
                    redos += 1;
                }
            }
        }
    }
}

/// Nested text form, e.g. `SEQ(a, XOR(b, c))`; silent leaves are `tau`.
impl fmt::Display for ProcessTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ProcessTree::Activity(a) => return write!(f, "{a}"),
            ProcessTree::Silent => return f.write_str("tau"),
            ProcessTree::Sequence(_) => "SEQ",
            ProcessTree::Exclusive(_) => "XOR",
            ProcessTree::Parallel(_) => "PAR",
            ProcessTree::Loop(_) => "LOOP",
        };
        write!(f, "{name}(")?;
        for (i, c) in self.children().iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("process tree text: {reason} at byte {position}")]
pub struct ParseTreeError {
    pub position: usize,
    pub reason: &'static str,
}

impl FromStr for ProcessTree {
    type Err = ParseTreeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parser = TreeParser { text: s, pos: 0 };
        let tree = parser.node()?;
        parser.skip_ws();
        if parser.pos != s.len() {
            return Err(parser.error("trailing input"));
        }
        if !tree.is_valid() {
            return Err(parser.error("operator with fewer than two children"));
        }
        Ok(tree)
    }
}

struct TreeParser<'a> {
    text: &'a str,
    pos: usize,
}

impl TreeParser<'_> {
    fn error(&self, reason: &'static str) -> ParseTreeError {
        ParseTreeError { position: self.pos, reason }
    }

    fn skip_ws(&mut self) {
        while self.text[self.pos..].starts_with(char::is_whitespace) {
            self.pos += self.text[self.pos..].chars().next().map_or(1, char::len_utf8);
        }
    }

    fn node(&mut self) -> Result<ProcessTree, ParseTreeError> {
        self.skip_ws();
        let rest = &self.text[self.pos..];
        let len = rest.find(|c: char| c == '(' || c == ')' || c == ',' || c.is_whitespace()).unwrap_or(rest.len());
        if len == 0 {
            return Err(self.error("expected a label or operator"));
        }
        let word = &rest[..len];
        self.pos += len;
        if !self.text[self.pos..].starts_with('(') {
            return Ok(match word {
                "tau" => ProcessTree::Silent,
                label => ProcessTree::Activity(Activity::from_label(label.to_owned())),
            });
        }
        let build: fn(Vec<ProcessTree>) -> ProcessTree = match word {
            "SEQ" => ProcessTree::Sequence,
            "XOR" => ProcessTree::Exclusive,
            "PAR" => ProcessTree::Parallel,
            "LOOP" => ProcessTree::Loop,
            _ => return Err(self.error("unknown operator")),
        };
        self.pos += 1;
        let mut children = Vec::new();
        loop {
            children.push(self.node()?);
            self.skip_ws();
            match self.text[self.pos..].chars().next() {
                Some(',') => self.pos += 1,
                Some(')') => {
                    self.pos += 1;
                    return Ok(build(children));
                }
                _ => return Err(self.error("expected ',' or ')'")),
            }
        }
    }
}
