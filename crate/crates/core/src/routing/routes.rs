use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::topology::SinkTable;
use super::RoutingError;
use crate::netmodel::NodeId;

pub const DEFAULT_PATH_CAP: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutePolicy {
    MinHop,
    /// Maximise the smallest shared-key count along the path.
    #[default]
    MaxMinKeys,
    /// Keep every path; the first enumerated one is used for delivery.
    AllPaths,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteSet {
    pub destination: NodeId,
    pub policy: RoutePolicy,
    /// `(S_t, S_{t+1})` with `S_0 = {D}` and `S_{t+1}` the union of the
    /// forwarders of `S_t`'s non-sink members.
    pub hops: Vec<(BTreeSet<NodeId>, BTreeSet<NodeId>)>,
    /// Simple paths written from the sink to the destination.
    pub expanded_paths: Vec<Vec<NodeId>>,
    pub chosen: Option<Vec<NodeId>>,
    /// Set when enumeration stopped at the path cap.
    pub truncated: bool,
}

impl RouteSet {
    pub fn chosen_hops(&self) -> usize {
        self.chosen.as_ref().map_or(0, |p| p.len().saturating_sub(1))
    }
}

fn bottleneck(table: &SinkTable, path: &[NodeId]) -> u32 {
    // path runs sink -> D, so each node's forwarder precedes it.
    path.windows(2)
        .map(|w| {
            table
                .relays(w[1])
                .and_then(|r| r.iter().find(|e| e.node == w[0]))
                .map_or(0, |e| e.k)
        })
        .min()
        .unwrap_or(u32::MAX)
}

/// Builds the chained forwarder-set pairs from `destination` up to the sink
/// and expands them into simple paths (at most `cap`).
pub fn construct_query_routes(table: &SinkTable, destination: NodeId, policy: RoutePolicy, cap: usize) -> Result<RouteSet, RoutingError> {
    let sink = table.sink;
    let mut set = RouteSet {
        destination,
        policy,
        hops: Vec::new(),
        expanded_paths: Vec::new(),
        chosen: None,
        truncated: false,
    };
    if destination == sink {
        return Ok(set);
    }
    let unreachable = |at| RoutingError::Unreachable { destination, break_at: at };
    match table.relays(destination) {
        Some(r) if !r.is_empty() => {}
        _ => return Err(unreachable(destination)),
    }

    let mut current = BTreeSet::from([destination]);
    let mut expanded = BTreeSet::new();
    while current.iter().any(|&v| v != sink) && current.iter().any(|v| !expanded.contains(v)) {
        let mut next = BTreeSet::new();
        for &v in current.iter().filter(|&&v| v != sink) {
            expanded.insert(v);
            next.extend(table.relays(v).unwrap_or(&[]).iter().map(|e| e.node));
        }
        set.hops.push((current, next.clone()));
        current = next;
    }

    // Depth-first over forwarders in priority order, so the first path is
    // the primary chain.
    let mut stack = vec![destination];
    let mut on_path = BTreeSet::from([destination]);
    let mut first_break = None;
    fn walk(
        table: &SinkTable,
        stack: &mut Vec<NodeId>,
        on_path: &mut BTreeSet<NodeId>,
        out: &mut Vec<Vec<NodeId>>,
        cap: usize,
        truncated: &mut bool,
        first_break: &mut Option<NodeId>,
    ) {
        let at = *stack.last().expect("stack holds the destination");
        if at == table.sink {
            out.push(stack.iter().rev().copied().collect());
            return;
        }
        let relays = table.relays(at).unwrap_or(&[]);
        if relays.is_empty() {
            first_break.get_or_insert(at);
            return;
        }
        for e in relays {
            if out.len() >= cap {
                *truncated = true;
                return;
            }
            if !on_path.insert(e.node) {
                continue;
            }
            stack.push(e.node);
            walk(table, stack, on_path, out, cap, truncated, first_break);
            stack.pop();
            on_path.remove(&e.node);
        }
    }
    walk(
        table,
        &mut stack,
        &mut on_path,
        &mut set.expanded_paths,
        cap,
        &mut set.truncated,
        &mut first_break,
    );
    if set.expanded_paths.is_empty() {
        return Err(unreachable(first_break.unwrap_or(destination)));
    }

    let paths = &set.expanded_paths;
    let chosen = match policy {
        RoutePolicy::AllPaths => paths.first(),
        RoutePolicy::MinHop => paths.iter().min_by_key(|p| p.len()),
        RoutePolicy::MaxMinKeys => paths
            .iter()
            .enumerate()
            .max_by(|(i, a), (j, b)| {
                bottleneck(table, a)
                    .cmp(&bottleneck(table, b))
                    .then(b.len().cmp(&a.len()))
                    .then(j.cmp(i))
            })
            .map(|(_, p)| p),
    };
    set.chosen = chosen.cloned();
    Ok(set)
}
