use alloc::format;

use super::tree::ProcessTree;
use crate::petri::{Arc, Marking, PetriNet, PlaceId};

/// Compile a process tree into a workflow net with places `source` and
/// `sink`.
///
/// Loops and parallel blocks are wired through silent transitions so that
/// every block keeps a private entry and exit place.
pub fn tree_to_petri(tree: &ProcessTree) -> PetriNet {
    let mut net = PetriNet::new();
    let source = net.add_place("source");
    let sink = net.add_place("sink");
    Compiler { net: &mut net }.block(tree, source, sink);
    net.initial_marking = Marking::single(source);
    net.final_marking = Marking::single(sink);
    net
}

struct Compiler<'a> {
    net: &'a mut PetriNet,
}

impl Compiler<'_> {
    fn place(&mut self) -> PlaceId {
        let name = format!("p{}", self.net.places.len());
        self.net.add_place(name)
    }

    fn silent(&mut self, entry: PlaceId, exit: PlaceId) {
        let name = format!("tau{}", self.net.transitions.len());
        let t = self.net.add_transition(name, None);
        self.link(entry, t, exit);
    }

    fn link(&mut self, entry: PlaceId, t: crate::petri::TransitionId, exit: PlaceId) {
        self.net.add_arc(Arc::Input(entry, t)).expect("fresh nodes");
        self.net.add_arc(Arc::Output(t, exit)).expect("fresh nodes");
    }

    fn block(&mut self, tree: &ProcessTree, entry: PlaceId, exit: PlaceId) {
        match tree {
            ProcessTree::Activity(a) => {
                let name = format!("t{}", self.net.transitions.len());
                let t = self.net.add_transition(name, Some(a.clone()));
                self.link(entry, t, exit);
            }
            ProcessTree::Silent => self.silent(entry, exit),
            ProcessTree::Sequence(children) => {
                let mut from = entry;
                for (i, c) in children.iter().enumerate() {
                    let to = if i + 1 == children.len() { exit } else { self.place() };
                    self.block(c, from, to);
                    from = to;
                }
            }
            ProcessTree::Exclusive(children) => {
                for c in children {
                    self.block(c, entry, exit);
                }
            }
            ProcessTree::Parallel(children) => {
                let fork = self.net.add_transition(format!("tau{}", self.net.transitions.len()), None);
                let join = self.net.add_transition(format!("tau{}", self.net.transitions.len()), None);
                self.net.add_arc(Arc::Input(entry, fork)).expect("fresh nodes");
                self.net.add_arc(Arc::Output(join, exit)).expect("fresh nodes");
                for c in children {
                    let (start, end) = (self.place(), self.place());
                    self.net.add_arc(Arc::Output(fork, start)).expect("fresh nodes");
                    self.net.add_arc(Arc::Input(end, join)).expect("fresh nodes");
                    self.block(c, start, end);
                }
            }
            ProcessTree::Loop(children) => {
                let (head, tail) = (self.place(), self.place());
                self.silent(entry, head);
                self.block(&children[0], head, tail);
                for redo in &children[1..] {
                    self.block(redo, tail, head);
                }
                self.silent(tail, exit);
            }
        }
    }
}
