//! PNML subset: places with initial markings, transitions, arcs, and a
//! final marking.

use std::collections::BTreeMap;

use netstate_core::log::Activity;
use netstate_core::petri::{Arc, Marking, PetriNet, PlaceId, TransitionId};
use quick_xml::events::{BytesDecl, Event};
use quick_xml::{Reader, Writer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PnmlError {
    #[error("malformed PNML: {0}")]
    MalformedPnml(String),
}

fn bad(msg: impl Into<String>) -> PnmlError {
    PnmlError::MalformedPnml(msg.into())
}

fn text_child(w: &mut Writer<&mut Vec<u8>>, tag: &str, text: &str) -> std::io::Result<()> {
    w.create_element(tag).write_inner_content(|w| {
        w.create_element("text").write_text_content(quick_xml::events::BytesText::new(text))?;
        Ok(())
    })?;
    Ok(())
}

/// Places get ids `p<i>`, transitions `t<i>`; silent transitions have no
/// `name` element.
pub fn pnml_bytes(net: &PetriNet) -> Vec<u8> {
    let mut buf = Vec::new();
    let mut w = Writer::new_with_indent(&mut buf, b' ', 2);
    let result: std::io::Result<()> = (|| {
        w.write_event(Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)))?;
        w.create_element("pnml").write_inner_content(|w| {
            w.create_element("net")
                .with_attribute(("id", "net"))
                .with_attribute(("type", "http://www.pnml.org/version-2009/grammar/pnmlcoremodel"))
                .write_inner_content(|w| {
                    w.create_element("page").with_attribute(("id", "page")).write_inner_content(|w| {
                        for (i, p) in net.places.iter().enumerate() {
                            let id = format!("p{i}");
                            w.create_element("place").with_attribute(("id", id.as_str())).write_inner_content(|w| {
                                text_child(w, "name", &p.name)?;
                                let n = net.initial_marking.tokens(PlaceId(i));
                                if n > 0 {
                                    text_child(w, "initialMarking", &n.to_string())?;
                                }
                                Ok(())
                            })?;
                        }
                        for (i, t) in net.transitions.iter().enumerate() {
                            let id = format!("t{i}");
                            let el = w.create_element("transition").with_attribute(("id", id.as_str()));
                            match &t.label {
                                Some(label) => {
                                    el.write_inner_content(|w| text_child(w, "name", label.as_str()))?;
                                }
                                None => {
                                    el.write_empty()?;
                                }
                            }
                        }
                        for (i, a) in net.arcs.iter().enumerate() {
                            let (src, dst) = match a {
                                Arc::Input(p, t) => (format!("p{}", p.0), format!("t{}", t.0)),
                                Arc::Output(t, p) => (format!("t{}", t.0), format!("p{}", p.0)),
                            };
                            w.create_element("arc")
                                .with_attribute(("id", format!("a{i}").as_str()))
                                .with_attribute(("source", src.as_str()))
                                .with_attribute(("target", dst.as_str()))
                                .write_empty()?;
                        }
                        Ok(())
                    })?;
                    w.create_element("finalmarkings").write_inner_content(|w| {
                        w.create_element("marking").write_inner_content(|w| {
                            for (p, n) in net.final_marking.iter() {
                                w.create_element("place")
                                    .with_attribute(("idref", format!("p{}", p.0).as_str()))
                                    .write_inner_content(|w| {
                                        w.create_element("text")
                                            .write_text_content(quick_xml::events::BytesText::new(&n.to_string()))?;
                                        Ok(())
                                    })?;
                            }
                            Ok(())
                        })?;
                        Ok(())
                    })?;
                    Ok(())
                })?;
            Ok(())
        })?;
        Ok(())
    })();
    result.expect("writing to memory");
    buf.push(b'\n');
    buf
}

#[derive(Debug, Default)]
struct Node {
    name: String,
    attrs: BTreeMap<String, String>,
    children: Vec<Node>,
    text: String,
}

impl Node {
    fn child(&self, name: &str) -> Option<&Node> {
        self.children.iter().find(|c| c.name == name)
    }

    fn descendants<'a>(&'a self, name: &str, out: &mut Vec<&'a Node>) {
        for c in &self.children {
            if c.name == name {
                out.push(c);
            }
            c.descendants(name, out);
        }
    }

    /// Text of `<tag><text>..</text></tag>`.
    fn text_of(&self, tag: &str) -> Option<&str> {
        self.child(tag).and_then(|n| n.child("text")).map(|t| t.text.trim())
    }
}

fn parse_tree(text: &str) -> Result<Node, PnmlError> {
    let mut reader = Reader::from_str(text);
    let mut stack = vec![Node::default()];
    let open = |e: &quick_xml::events::BytesStart| -> Result<Node, PnmlError> {
        let mut n = Node { name: String::from_utf8_lossy(e.local_name().as_ref()).into_owned(), ..Node::default() };
        for a in e.attributes() {
            let a = a.map_err(|e| bad(e.to_string()))?;
            let v = a.unescape_value().map_err(|e| bad(e.to_string()))?;
            n.attrs.insert(String::from_utf8_lossy(a.key.local_name().as_ref()).into_owned(), v.into_owned());
        }
        Ok(n)
    };
    loop {
        match reader.read_event().map_err(|e| bad(e.to_string()))? {
            Event::Start(e) => stack.push(open(&e)?),
            Event::Empty(e) => {
                let n = open(&e)?;
                stack.last_mut().expect("root").children.push(n);
            }
            Event::End(_) => {
                let n = stack.pop().expect("balanced");
                stack.last_mut().ok_or_else(|| bad("unbalanced end tag"))?.children.push(n);
            }
            Event::Text(t) => {
                let s = t.unescape().map_err(|e| bad(e.to_string()))?;
                stack.last_mut().expect("root").text.push_str(&s);
            }
            Event::CData(t) => {
                stack.last_mut().expect("root").text.push_str(&String::from_utf8_lossy(&t));
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if stack.len() != 1 {
        return Err(bad("unclosed element"));
    }
    Ok(stack.pop().expect("root"))
}

/// Read a net written by [`pnml_bytes`] or a compatible tool.
///
/// Without a `finalmarkings` section the final marking is one token on the
/// unique place without outgoing arcs.
pub fn parse_pnml(text: &str) -> Result<PetriNet, PnmlError> {
    let root = parse_tree(text)?;
    let pnml = root.child("pnml").ok_or_else(|| bad("missing <pnml> root"))?;
    let net_node = pnml.child("net").ok_or_else(|| bad("missing <net>"))?;
    let mut net = PetriNet::new();
    let mut ids: BTreeMap<String, Result<PlaceId, TransitionId>> = BTreeMap::new();
    let id_of = |n: &Node| n.attrs.get("id").cloned().ok_or_else(|| bad(format!("<{}> without id", n.name)));
    let (mut places, mut transitions, mut arcs) = (Vec::new(), Vec::new(), Vec::new());
    net_node.descendants("place", &mut places);
    net_node.descendants("transition", &mut transitions);
    net_node.descendants("arc", &mut arcs);
    let mut finals = Vec::new();
    if let Some(f) = net_node.child("finalmarkings") {
        f.descendants("place", &mut finals);
    }
    for p in places.iter().filter(|p| !p.attrs.contains_key("idref")) {
        let id = id_of(p)?;
        let name = p.text_of("name").map(str::to_owned).unwrap_or_else(|| id.clone());
        let pid = net.add_place(name);
        if let Some(m) = p.text_of("initialMarking") {
            let n: u32 = m.parse().map_err(|_| bad(format!("bad initial marking {m:?}")))?;
            net.initial_marking.add(pid, n);
        }
        if ids.insert(id.clone(), Ok(pid)).is_some() {
            return Err(bad(format!("duplicate id {id}")));
        }
    }
    for t in transitions {
        let id = id_of(t)?;
        let label = t.text_of("name").filter(|s| !s.is_empty()).map(|s| Activity::from_label(s.to_owned()));
        let tid = net.add_transition(id.clone(), label);
        if ids.insert(id.clone(), Err(tid)).is_some() {
            return Err(bad(format!("duplicate id {id}")));
        }
    }
    for a in arcs {
        let end = |key: &str| {
            let v = a.attrs.get(key).ok_or_else(|| bad(format!("arc without {key}")))?;
            ids.get(v).copied().ok_or_else(|| bad(format!("arc references unknown node {v}")))
        };
        let arc = match (end("source")?, end("target")?) {
            (Ok(p), Err(t)) => Arc::Input(p, t),
            (Err(t), Ok(p)) => Arc::Output(t, p),
            _ => return Err(bad("arc must connect a place and a transition")),
        };
        net.add_arc(arc).map_err(|e| bad(e.to_string()))?;
    }
    if finals.is_empty() {
        let sinks = net.sink_places();
        if sinks.len() != 1 {
            return Err(bad("no final marking and no unique sink place"));
        }
        net.final_marking = Marking::single(sinks[0]);
    } else {
        for f in finals {
            let r = f.attrs.get("idref").ok_or_else(|| bad("final marking place without idref"))?;
            let Some(Ok(pid)) = ids.get(r).copied() else { return Err(bad(format!("unknown place {r}"))) };
            let n: u32 = f.child("text").map(|t| t.text.trim()).unwrap_or("1").parse().map_err(|_| bad("bad final marking"))?;
            net.final_marking.add(pid, n);
        }
    }
    Ok(net)
}
