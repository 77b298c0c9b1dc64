//! Sink-rooted routing: the EAK fixpoint, forwarder-list dispatch, topology
//! collection at the sink, route construction and sealed delivery.
//!
//! A node only offers its EAK to neighbours ranked strictly above it, where
//! nodes are ranked by (hop level from the sink, distance to the sink, id).
//! The candidate relation is therefore acyclic, the fixpoint is unique, and
//! both computation modes reach it.

mod delivery;
mod routes;
mod topology;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eak::{self, Admission, Candidate, EakRecord, MetricError, NhEntry, NhList};
use crate::keyproto::{GroupKeyId, ProtocolError, SealError};
use crate::netmodel::{NetworkGraph, NodeId};

pub use delivery::{forward_query_and_reply, DeliveryTrace, Direction, HopRecord, Tamper};
pub use routes::{construct_query_routes, RoutePolicy, RouteSet, DEFAULT_PATH_CAP};
pub use topology::{collect_topology_at_sink, dispatch_nhlists, Dispatch, Notification, SinkTable, TopologyRecord, TopologyReport};

pub const EPSILON: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoutingError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("no convergence after {rounds} rounds; still changing: {oscillating:?}")]
    NonConvergence { rounds: usize, oscillating: Vec<NodeId> },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {node} lists {forwarder}, which is not a neighbour")]
    NotNeighbor { node: NodeId, forwarder: NodeId },
    #[error("forwarder lists form a cycle through node {0}")]
    Cycle(NodeId),
    #[error("destination {destination} unreachable: no forwarders recorded for node {break_at}")]
    Unreachable { destination: NodeId, break_at: NodeId },
    #[error("path {0:?} is not a route to the sink")]
    InvalidPath(Vec<NodeId>),
    #[error("{direction} hop {hop}: node {node} lacks {key}")]
    MissingKey {
        direction: Direction,
        hop: usize,
        node: NodeId,
        key: GroupKeyId,
    },
    #[error("{direction} hop {hop} ({from} -> {to}) rejected: {source}")]
    Delivery {
        direction: Direction,
        hop: usize,
        from: NodeId,
        to: NodeId,
        source: SealError,
    },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    GreedyFinalize,
    IterativeRelax,
}

/// Tally of every admission made by forwarder selection during a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissionStats {
    pub admissions: u64,
    /// Admissions that lowered the relay part.
    pub violations: u64,
    pub min_delta: Option<f64>,
}

impl AdmissionStats {
    fn new() -> Self {
        AdmissionStats {
            admissions: 0,
            violations: 0,
            min_delta: None,
        }
    }

    fn record(&mut self, a: &[Admission]) {
        for adm in a {
            let d = adm.delta();
            self.admissions += 1;
            if d < 0.0 {
                self.violations += 1;
            }
            self.min_delta = Some(self.min_delta.map_or(d, |m: f64| m.min(d)));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingState {
    pub mode: Mode,
    pub sink: NodeId,
    pub eak: BTreeMap<NodeId, EakRecord>,
    pub nhlists: BTreeMap<NodeId, NhList>,
    /// `selectors[v]` holds every `u` with `v` in its forwarder list.
    pub selectors: BTreeMap<NodeId, BTreeSet<NodeId>>,
    pub rounds: usize,
    pub admission_stats: AdmissionStats,
}

impl RoutingState {
    fn assemble(graph: &NetworkGraph, mode: Mode, table: Vec<EakRecord>, lists: Vec<NhList>, rounds: usize, stats: AdmissionStats) -> Self {
        let selectors = invert(graph, lists.iter());
        RoutingState {
            mode,
            sink: graph.sink(),
            eak: table.into_iter().map(|r| (r.node, r)).collect(),
            nhlists: lists.into_iter().map(|l| (l.owner, l)).collect(),
            selectors,
            rounds,
            admission_stats: stats,
        }
    }

    pub fn record(&self, node: NodeId) -> Option<&EakRecord> {
        self.eak.get(&node)
    }

    pub fn nhlist(&self, node: NodeId) -> Option<&NhList> {
        self.nhlists.get(&node)
    }

    /// Non-sink nodes without forwarders.
    pub fn unreachable(&self) -> Vec<NodeId> {
        self.nhlists
            .iter()
            .filter(|(&n, l)| n != self.sink && l.is_empty())
            .map(|(&n, _)| n)
            .collect()
    }

    /// Forwarder lists as plain id lists (the relay sets of each selector).
    pub fn relay_sets(&self) -> BTreeMap<NodeId, Vec<NodeId>> {
        self.nhlists
            .iter()
            .filter(|(_, l)| !l.is_empty())
            .map(|(&n, l)| (n, l.nodes().collect()))
            .collect()
    }

    /// Builds a state from hand-specified forwarder lists, evaluating each
    /// node's EAK over exactly the listed forwarders.
    pub fn from_forwarders(graph: &NetworkGraph, forwarders: &BTreeMap<NodeId, Vec<NodeId>>) -> Result<Self, RoutingError> {
        let n = graph.len();
        for (&u, list) in forwarders {
            if u as usize >= n {
                return Err(RoutingError::UnknownNode(u));
            }
            for &v in list {
                if graph.link(u, v).is_none() {
                    return Err(RoutingError::NotNeighbor { node: u, forwarder: v });
                }
            }
        }
        let mut table: Vec<Option<EakRecord>> = vec![None; n];
        let mut lists: Vec<NhList> = (0..n as NodeId).map(NhList::empty).collect();
        table[graph.sink() as usize] = Some(EakRecord::zero(graph.sink()));

        fn eval(
            u: NodeId,
            graph: &NetworkGraph,
            fw: &BTreeMap<NodeId, Vec<NodeId>>,
            table: &mut Vec<Option<EakRecord>>,
            lists: &mut Vec<NhList>,
            active: &mut BTreeSet<NodeId>,
        ) -> Result<EakRecord, RoutingError> {
            if let Some(r) = table[u as usize] {
                return Ok(r);
            }
            if !active.insert(u) {
                return Err(RoutingError::Cycle(u));
            }
            let list = fw.get(&u).map(Vec::as_slice).unwrap_or(&[]);
            let mut entries = Vec::with_capacity(list.len());
            for (i, &v) in list.iter().enumerate() {
                let rec = eval(v, graph, fw, table, lists, active)?;
                let link = graph.link(u, v).expect("checked above");
                entries.push(NhEntry {
                    node: v,
                    priority: i as u32 + 1,
                    eak: rec.eak,
                    k: link.k,
                    f: link.f,
                });
            }
            active.remove(&u);
            let rec = record_over(u, &entries)?;
            table[u as usize] = Some(rec);
            lists[u as usize] = NhList { owner: u, entries };
            Ok(rec)
        }

        let mut active = BTreeSet::new();
        for u in 0..n as NodeId {
            eval(u, graph, forwarders, &mut table, &mut lists, &mut active)?;
        }
        let table = table.into_iter().map(|r| r.expect("every node evaluated")).collect();
        Ok(Self::assemble(graph, Mode::GreedyFinalize, table, lists, 0, AdmissionStats::new()))
    }
}

fn record_over(owner: NodeId, entries: &[NhEntry]) -> Result<EakRecord, RoutingError> {
    if entries.is_empty() {
        return Ok(EakRecord::zero(owner));
    }
    let ks: Vec<u32> = entries.iter().map(|e| e.k).collect();
    let fs: Vec<f64> = entries.iter().map(|e| e.f).collect();
    let es: Vec<f64> = entries.iter().map(|e| e.eak).collect();
    let last_hop = eak::last_hop_eak(&ks, &fs)?;
    let relay = eak::relay_eak(&es, &fs)?.conditional;
    Ok(EakRecord {
        node: owner,
        eak: eak::total_eak(last_hop, relay),
        last_hop,
        relay,
    })
}

fn invert<'a>(graph: &NetworkGraph, lists: impl Iterator<Item = &'a NhList>) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
    let mut sel: BTreeMap<NodeId, BTreeSet<NodeId>> = (0..graph.len() as NodeId).map(|v| (v, BTreeSet::new())).collect();
    for l in lists {
        for v in l.nodes() {
            sel.entry(v).or_default().insert(l.owner);
        }
    }
    sel
}

/// Position of every node in the candidate order; lower ranks are closer to
/// the sink. Nodes cut off from the sink rank last.
pub fn node_ranks(graph: &NetworkGraph) -> Vec<usize> {
    let levels = graph.hop_levels();
    let sink_pos = graph.nodes()[graph.sink() as usize].position;
    let mut order: Vec<NodeId> = (0..graph.len() as NodeId).collect();
    order.sort_by(|&a, &b| {
        let key = |v: NodeId| levels[v as usize].unwrap_or(usize::MAX);
        let dist = |v: NodeId| graph.nodes()[v as usize].position.distance(&sink_pos);
        key(a).cmp(&key(b)).then(dist(a).total_cmp(&dist(b))).then(a.cmp(&b))
    });
    let mut rank = vec![0; graph.len()];
    for (i, v) in order.into_iter().enumerate() {
        rank[v as usize] = i;
    }
    rank
}

struct Relaxer<'g> {
    graph: &'g NetworkGraph,
    rank: Vec<usize>,
    stats: AdmissionStats,
}

impl Relaxer<'_> {
    fn update(&mut self, u: NodeId, table: &[EakRecord], allow: impl Fn(NodeId) -> bool) -> Result<eak::Selection, RoutingError> {
        let sink = self.graph.sink();
        let candidates: Vec<Candidate> = self
            .graph
            .neighbors(u)
            .iter()
            .copied()
            .filter(|&v| self.rank[v as usize] < self.rank[u as usize] && allow(v))
            .map(|v| {
                let l = self.graph.link(u, v).expect("neighbour has a link");
                Candidate {
                    node: v,
                    eak: table[v as usize].eak,
                    k: l.k,
                    f: l.f,
                    is_sink: v == sink,
                }
            })
            .collect();
        let sel = eak::update_eak(u, &candidates)?;
        self.stats.record(&sel.admissions);
        Ok(sel)
    }

    /// One synchronous round over every non-sink node. Returns the nodes
    /// whose record or forwarder list changed beyond `eps`.
    fn sweep(&mut self, table: &mut [EakRecord], lists: &mut [NhList], eps: f64) -> Result<Vec<NodeId>, RoutingError> {
        let sink = self.graph.sink();
        let prev = table.to_vec();
        let mut changed = Vec::new();
        for u in 0..self.graph.len() as NodeId {
            if u == sink {
                continue;
            }
            let sel = self.update(u, &prev, |_| true)?;
            let i = u as usize;
            let moved = if eps == 0.0 {
                sel.record != prev[i]
            } else {
                (sel.record.eak - prev[i].eak).abs() > eps
            };
            if moved || !sel.nhlist.same_members(&lists[i]) {
                changed.push(u);
            }
            table[i] = sel.record;
            lists[i] = sel.nhlist;
        }
        Ok(changed)
    }
}

/// Computes every node's EAK and forwarder list.
///
/// `GreedyFinalize` settles nodes one at a time in order of decreasing EAK,
/// each relaxing its unsettled neighbours from settled candidates only,
/// then sweeps until nothing changes. `IterativeRelax` runs synchronous
/// rounds from all-zero records until EAK values move by at most
/// [`EPSILON`] and no list changes, for at most `|V|` rounds.
pub fn compute_eak_to_sink(graph: &NetworkGraph, mode: Mode) -> Result<RoutingState, RoutingError> {
    let n = graph.len();
    let sink = graph.sink();
    let mut rx = Relaxer {
        graph,
        rank: node_ranks(graph),
        stats: AdmissionStats::new(),
    };
    let mut table: Vec<EakRecord> = (0..n as NodeId).map(EakRecord::zero).collect();
    let mut lists: Vec<NhList> = (0..n as NodeId).map(NhList::empty).collect();

    let rounds = match mode {
        Mode::GreedyFinalize => {
            let mut settled = vec![false; n];
            settled[sink as usize] = true;
            let mut frontier = vec![sink];
            while let Some(v) = frontier.pop() {
                for &u in graph.neighbors(v) {
                    if settled[u as usize] || rx.rank[u as usize] < rx.rank[v as usize] {
                        continue;
                    }
                    let sel = rx.update(u, &table, |w| settled[w as usize])?;
                    table[u as usize] = sel.record;
                    lists[u as usize] = sel.nhlist;
                }
                let next = (0..n)
                    .filter(|&u| !settled[u] && table[u].eak > 0.0)
                    .max_by(|&a, &b| table[a].eak.total_cmp(&table[b].eak).then(b.cmp(&a)));
                if let Some(u) = next {
                    settled[u] = true;
                    frontier.push(u as NodeId);
                }
            }
            let mut rounds = 1;
            loop {
                let changed = rx.sweep(&mut table, &mut lists, 0.0)?;
                if changed.is_empty() {
                    break rounds;
                }
                rounds += 1;
                if rounds > n + 1 {
                    return Err(RoutingError::NonConvergence {
                        rounds,
                        oscillating: changed,
                    });
                }
            }
        }
        Mode::IterativeRelax => {
            let cap = n.max(1);
            let mut rounds = 0;
            loop {
                rounds += 1;
                let changed = rx.sweep(&mut table, &mut lists, EPSILON)?;
                if changed.is_empty() {
                    break rounds;
                }
                if rounds >= cap {
                    return Err(RoutingError::NonConvergence {
                        rounds,
                        oscillating: changed,
                    });
                }
            }
        }
    };
    let stats = rx.stats;
    Ok(RoutingState::assemble(graph, mode, table, lists, rounds, stats))
}
