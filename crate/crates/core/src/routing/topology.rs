use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::RoutingState;
use crate::eak::NhEntry;
use crate::netmodel::{NetworkGraph, NodeId};

/// A node telling one of its forwarders that it was selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notification {
    pub from: NodeId,
    pub to: NodeId,
    pub priority: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dispatch {
    pub notifications: Vec<Notification>,
}

impl Dispatch {
    pub fn message_count(&self) -> usize {
        self.notifications.len()
    }
}

/// Every node notifies each of its forwarders; receivers rebuild their
/// selector sets from the notifications alone.
pub fn dispatch_nhlists(state: &mut RoutingState) -> Dispatch {
    let notifications: Vec<Notification> = state
        .nhlists
        .values()
        .flat_map(|l| {
            l.entries.iter().map(move |e| Notification {
                from: l.owner,
                to: e.node,
                priority: e.priority,
            })
        })
        .collect();
    for s in state.selectors.values_mut() {
        s.clear();
    }
    for n in &notifications {
        state.selectors.entry(n.to).or_default().insert(n.from);
    }
    Dispatch { notifications }
}

/// What the sink learns about one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyRecord {
    pub node: NodeId,
    pub relays: Vec<NhEntry>,
    pub selectors: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkTable {
    pub sink: NodeId,
    pub records: BTreeMap<NodeId, TopologyRecord>,
}

impl SinkTable {
    pub fn relays(&self, node: NodeId) -> Option<&[NhEntry]> {
        self.records.get(&node).map(|r| r.relays.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyReport {
    pub table: SinkTable,
    /// Unicasts when every record travels separately along its primary chain.
    pub unaggregated_messages: usize,
    /// Unicasts when relays merge the records they hold into one message.
    pub aggregated_messages: usize,
    pub unreachable: Vec<NodeId>,
}

/// Gathers every node's (selectors, relays) record at the sink along each
/// node's chain of highest-priority relays.
pub fn collect_topology_at_sink(state: &RoutingState, graph: &NetworkGraph) -> TopologyReport {
    let sink = state.sink;
    let primary = |u: NodeId| state.nhlists.get(&u).and_then(|l| l.primary());
    let mut records = BTreeMap::new();
    let mut unreachable = Vec::new();
    let mut depth: BTreeMap<NodeId, usize> = BTreeMap::from([(sink, 0)]);

    for u in 0..graph.len() as NodeId {
        let selectors: Vec<NodeId> = state.selectors.get(&u).map(|s| s.iter().copied().collect()).unwrap_or_default();
        let relays = state.nhlists.get(&u).map(|l| l.entries.clone()).unwrap_or_default();
        if u != sink {
            // Walk the primary chain; a chain that stalls or loops never delivers.
            let mut seen = BTreeSet::from([u]);
            let mut hops = 0;
            let mut at = u;
            let delivered = loop {
                match primary(at) {
                    Some(next) if next == sink => break true,
                    Some(next) if seen.insert(next) => {
                        hops += 1;
                        at = next;
                    }
                    _ => break false,
                }
            };
            if !delivered {
                unreachable.push(u);
                continue;
            }
            depth.insert(u, hops + 1);
        }
        records.insert(
            u,
            TopologyRecord {
                node: u,
                relays,
                selectors,
            },
        );
    }

    let unaggregated = depth.values().sum();
    // Convergecast: a reporting node sends once, after merging its
    // primary-chain children's records into its own.
    let aggregated = depth.len() - 1;
    TopologyReport {
        table: SinkTable { sink, records },
        unaggregated_messages: unaggregated,
        aggregated_messages: aggregated,
        unreachable,
    }
}
