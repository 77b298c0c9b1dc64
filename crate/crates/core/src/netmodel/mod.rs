//! Network model: nodes, pre-distributed key rings and secured links.
//!
//! A link between two nodes exists only when they are within each other's
//! radio range *and* their key rings intersect. The intersection is kept on
//! the link so that later stages (sealing, adversary analysis) know exactly
//! which pre-distributed keys protect it.

mod deploy;
mod explicit;
mod export;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use deploy::{assign_key_rings, build_links, generate_deployment, DeploymentConfig, FailureModel};
pub use explicit::{ExplicitLink, ExplicitNode, ExplicitTopology};

pub type NodeId = u32;
pub type KeyId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("node_count must be at least 2, got {0}")]
    NodeCount(usize),
    #[error("deployment area must be positive, got {w} x {h}")]
    Area { w: f64, h: f64 },
    #[error("h_fraction must lie in [0, 1], got {0}")]
    HFraction(f64),
    #[error("transmission ranges must be positive (L: {range_l}, H: {range_h})")]
    Range { range_l: f64, range_h: f64 },
    #[error("sink position ({x}, {y}) lies outside the deployment area")]
    SinkOutside { x: f64, y: f64 },
    #[error("key pool must hold at least one key")]
    EmptyPool,
    #[error("ring sizes must satisfy 1 <= k1 <= k2 <= pool size (k1={k1}, k2={k2}, pool={pool})")]
    RingSize { k1: usize, k2: usize, pool: u32 },
    #[error("failure probability {0} outside [0, 1)")]
    FailureProbability(f64),
    #[error("invalid failure model: {0}")]
    FailureModel(String),
    #[error("invalid graph: {0}")]
    Graph(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyPool {
    size: u32,
}

impl KeyPool {
    pub fn new(size: u32) -> Result<Self, ModelError> {
        if size == 0 {
            return Err(ModelError::EmptyPool);
        }
        Ok(KeyPool { size })
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn contains(&self, key: KeyId) -> bool {
        key < self.size
    }
}

/// The set of pre-distributed key identifiers a node carries.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeyRing {
    keys: BTreeSet<KeyId>,
}

impl KeyRing {
    pub fn from_keys<I: IntoIterator<Item = KeyId>>(keys: I) -> Self {
        KeyRing {
            keys: keys.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn contains(&self, key: KeyId) -> bool {
        self.keys.contains(&key)
    }

    pub fn keys(&self) -> &BTreeSet<KeyId> {
        &self.keys
    }

    pub fn covers(&self, keys: &BTreeSet<KeyId>) -> bool {
        keys.is_subset(&self.keys)
    }
}

/// Exact intersection of two key rings.
pub fn shared_keys(a: &KeyRing, b: &KeyRing) -> BTreeSet<KeyId> {
    a.keys.intersection(&b.keys).copied().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tier {
    #[serde(rename = "L")]
    L,
    #[serde(rename = "H")]
    H,
    #[serde(rename = "sink")]
    Sink,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub w: f64,
    pub h: f64,
}

impl Area {
    pub fn contains(&self, p: &Position) -> bool {
        (0.0..=self.w).contains(&p.x) && (0.0..=self.h).contains(&p.y)
    }

    pub fn center(&self) -> Position {
        Position {
            x: self.w / 2.0,
            y: self.h / 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    pub tier: Tier,
    pub position: Position,
    pub range: f64,
    pub ring: KeyRing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkInfo {
    pub a: NodeId,
    pub b: NodeId,
    pub k: u32,
    pub f: f64,
    pub shared_keys: BTreeSet<KeyId>,
}

impl LinkInfo {
    pub fn other(&self, u: NodeId) -> NodeId {
        if u == self.a {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRepr {
    area: Area,
    pool_size: Option<u32>,
    nodes: Vec<NodeSpec>,
    links: Vec<LinkInfo>,
}

/// Undirected connectivity graph of a deployment.
///
/// Node ids are dense (`0..len`) so they double as indices. Links are kept
/// sorted by `(a, b)` with `a < b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct NetworkGraph {
    area: Area,
    pool: Option<KeyPool>,
    nodes: Vec<NodeSpec>,
    links: Vec<LinkInfo>,
    index: BTreeMap<(NodeId, NodeId), usize>,
    adjacency: Vec<Vec<NodeId>>,
    sink: NodeId,
}

impl TryFrom<GraphRepr> for NetworkGraph {
    type Error = ModelError;

    fn try_from(r: GraphRepr) -> Result<Self, ModelError> {
        let pool = r.pool_size.map(KeyPool::new).transpose()?;
        NetworkGraph::new(r.area, pool, r.nodes, r.links)
    }
}

impl From<NetworkGraph> for GraphRepr {
    fn from(g: NetworkGraph) -> Self {
        GraphRepr {
            area: g.area,
            pool_size: g.pool.map(|p| p.size()),
            nodes: g.nodes,
            links: g.links,
        }
    }
}

impl NetworkGraph {
    /// Assembles a graph and checks its structural invariants: dense ids,
    /// exactly one sink, and every link carrying a non-empty key set equal to
    /// the intersection of its endpoints' rings.
    pub fn new(area: Area, pool: Option<KeyPool>, nodes: Vec<NodeSpec>, mut links: Vec<LinkInfo>) -> Result<Self, ModelError> {
        let bad = |m: String| Err(ModelError::Graph(m));
        for (i, n) in nodes.iter().enumerate() {
            if n.id as usize != i {
                return bad(format!("node ids must be dense and ordered, found {} at index {i}", n.id));
            }
            if let Some(pool) = pool {
                if let Some(k) = n.ring.keys().iter().find(|k| !pool.contains(**k)) {
                    return bad(format!("node {} holds key {k} outside the pool", n.id));
                }
            }
        }
        let sinks: Vec<NodeId> = nodes.iter().filter(|n| n.tier == Tier::Sink).map(|n| n.id).collect();
        if sinks.len() != 1 {
            return bad(format!("expected exactly one sink, found {}", sinks.len()));
        }

        for l in links.iter_mut() {
            if l.a > l.b {
                std::mem::swap(&mut l.a, &mut l.b);
            }
        }
        links.sort_by_key(|l| (l.a, l.b));

        let mut index = BTreeMap::new();
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (i, l) in links.iter().enumerate() {
            if l.a == l.b {
                return bad(format!("self loop on node {}", l.a));
            }
            if l.b as usize >= nodes.len() {
                return bad(format!("link ({}, {}) references an unknown node", l.a, l.b));
            }
            if index.insert((l.a, l.b), i).is_some() {
                return bad(format!("duplicate link ({}, {})", l.a, l.b));
            }
            if !(0.0..1.0).contains(&l.f) {
                return Err(ModelError::FailureProbability(l.f));
            }
            let expected = shared_keys(&nodes[l.a as usize].ring, &nodes[l.b as usize].ring);
            if expected.is_empty() || expected != l.shared_keys || l.k as usize != expected.len() {
                return bad(format!("link ({}, {}) key set does not match ring intersection", l.a, l.b));
            }
            adjacency[l.a as usize].push(l.b);
            adjacency[l.b as usize].push(l.a);
        }
        for adj in adjacency.iter_mut() {
            adj.sort_unstable();
        }

        Ok(NetworkGraph {
            area,
            pool,
            nodes,
            links,
            index,
            adjacency,
            sink: sinks[0],
        })
    }

    pub fn area(&self) -> Area {
        self.area
    }

    pub fn pool(&self) -> Option<KeyPool> {
        self.pool
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn sink(&self) -> NodeId {
        self.sink
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeSpec> {
        self.nodes.get(id as usize)
    }

    pub fn links(&self) -> &[LinkInfo] {
        &self.links
    }

    pub fn link(&self, u: NodeId, v: NodeId) -> Option<&LinkInfo> {
        let key = if u < v { (u, v) } else { (v, u) };
        self.index.get(&key).map(|&i| &self.links[i])
    }

    /// Neighbours of `u` in ascending id order.
    pub fn neighbors(&self, u: NodeId) -> &[NodeId] {
        self.adjacency.get(u as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Hop distance from the sink, `None` for nodes outside its component.
    pub fn hop_levels(&self) -> Vec<Option<usize>> {
        let mut level = vec![None; self.nodes.len()];
        let mut queue = std::collections::VecDeque::new();
        level[self.sink as usize] = Some(0);
        queue.push_back(self.sink);
        while let Some(u) = queue.pop_front() {
            let next = level[u as usize].map(|l| l + 1);
            for &v in self.neighbors(u) {
                if level[v as usize].is_none() {
                    level[v as usize] = next;
                    queue.push_back(v);
                }
            }
        }
        level
    }

    pub fn is_connected(&self) -> bool {
        self.hop_levels().iter().all(Option::is_some)
    }

    pub(crate) fn with_parts(&self, nodes: Vec<NodeSpec>, pool: Option<KeyPool>, links: Vec<LinkInfo>) -> Result<Self, ModelError> {
        NetworkGraph::new(self.area, pool, nodes, links)
    }
}
