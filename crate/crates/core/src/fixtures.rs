//! Small hand-built topologies used by tests and shipped configs.

use crate::netmodel::{ExplicitLink, ExplicitNode, ExplicitTopology, NodeId, Tier};

fn node(id: NodeId, x: f64, y: f64) -> ExplicitNode {
    ExplicitNode {
        id,
        tier: if id == 0 { Tier::Sink } else { Tier::L },
        x,
        y,
        extra_keys: vec![],
    }
}

fn link(a: NodeId, b: NodeId, k: u32) -> ExplicitLink {
    ExplicitLink {
        a,
        b,
        k,
        f: 0.5,
        keys: None,
    }
}

/// sink(0) - a(1) - b(2) with 10 and 8 shared keys.
pub fn line() -> ExplicitTopology {
    ExplicitTopology {
        nodes: vec![node(0, 0.0, 0.0), node(1, 1.0, 0.0), node(2, 2.0, 0.0)],
        links: vec![link(0, 1, 10), link(1, 2, 8)],
    }
}

/// `m` leaves around the sink; leaf `i` shares `4 + i` keys with it.
pub fn star(m: u32) -> ExplicitTopology {
    let mut nodes = vec![node(0, 2.0, 2.0)];
    for i in 1..=m {
        let a = std::f64::consts::TAU * f64::from(i) / f64::from(m);
        nodes.push(node(i, 2.0 + a.cos(), 2.0 + a.sin()));
    }
    ExplicitTopology {
        nodes,
        links: (1..=m).map(|i| link(0, i, 4 + i)).collect(),
    }
}

/// Two disjoint two-hop arms from node 3 to the sink: through node 1 (8 and
/// 3 keys) and through node 2 (6 and 5 keys).
pub fn diamond() -> ExplicitTopology {
    ExplicitTopology {
        nodes: vec![node(0, 0.0, 1.0), node(1, 1.0, 2.0), node(2, 1.0, 0.0), node(3, 2.0, 1.0)],
        links: vec![link(0, 1, 8), link(1, 3, 3), link(0, 2, 6), link(2, 3, 5)],
    }
}

/// Complete binary tree of 7 nodes rooted at the sink, 10 keys per edge.
pub fn binary_tree() -> ExplicitTopology {
    ExplicitTopology {
        nodes: vec![
            node(0, 3.0, 0.0),
            node(1, 1.0, 1.0),
            node(2, 5.0, 1.0),
            node(3, 0.0, 2.0),
            node(4, 2.0, 2.0),
            node(5, 4.0, 2.0),
            node(6, 6.0, 2.0),
        ],
        links: vec![
            link(0, 1, 10),
            link(0, 2, 10),
            link(1, 3, 10),
            link(1, 4, 10),
            link(2, 5, 10),
            link(2, 6, 10),
        ],
    }
}

pub const WORKED_U: NodeId = 1;

/// Node 1 next to the sink (30 keys) and to nodes 2 and 3 (27 and 22 keys),
/// which sit closer to the sink; all links fail with probability 0.5. Node
/// 1 ends up forwarding to [sink, 2, 3].
pub fn worked_example() -> ExplicitTopology {
    ExplicitTopology {
        nodes: vec![node(0, 0.0, 1.0), node(1, 2.0, 1.0), node(2, 1.0, 2.0), node(3, 1.0, 0.0)],
        links: vec![link(0, 1, 30), link(1, 2, 27), link(1, 3, 22), link(0, 2, 12), link(0, 3, 10)],
    }
}

pub const NAMES: [&str; 5] = ["line", "star", "diamond", "binary_tree", "worked_example"];

pub fn by_name(name: &str) -> Option<ExplicitTopology> {
    match name {
        "line" => Some(line()),
        "star" => Some(star(5)),
        "diamond" => Some(diamond()),
        "binary_tree" => Some(binary_tree()),
        "worked_example" => Some(worked_example()),
        _ => None,
    }
}

pub fn all() -> Vec<(&'static str, ExplicitTopology)> {
    NAMES.iter().map(|&n| (n, by_name(n).expect("listed fixture"))).collect()
}
