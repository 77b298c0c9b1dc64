use std::fmt::Write;

use sha2::{Digest, Sha256};

use super::{NetworkGraph, Tier};

impl NetworkGraph {
    /// Pretty JSON with fields in declaration order and keys/links sorted,
    /// so equal graphs always serialise to the same bytes.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serialisation cannot fail")
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_canonical_json().as_bytes()))
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph wsn {\n");
        for n in self.nodes() {
            let (label, shape) = match n.tier {
                Tier::Sink => ("sink".to_string(), "doublecircle"),
                Tier::H => (format!("H{}", n.id), "box"),
                Tier::L => (format!("{}", n.id), "circle"),
            };
            let _ = writeln!(
                out,
                "  {} [label=\"{}\" shape={} pos=\"{:.3},{:.3}!\"];",
                n.id, label, shape, n.position.x, n.position.y
            );
        }
        for l in self.links() {
            let _ = writeln!(out, "  {} -- {} [label=\"k={} f={}\"];", l.a, l.b, l.k, l.f);
        }
        out.push_str("}\n");
        out
    }
}
