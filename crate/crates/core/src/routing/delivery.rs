use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{RoutingError, RoutingState};
use crate::keyproto::{GroupKeyId, KeyEstablishment};
use crate::netmodel::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Query,
    Reply,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Query => "query",
            Direction::Reply => "reply",
        })
    }
}

/// Corrupts the payload of one hop in transit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tamper {
    pub direction: Direction,
    pub hop: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopRecord {
    pub hop: usize,
    pub from: NodeId,
    pub to: NodeId,
    pub key: GroupKeyId,
    pub payload_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryTrace {
    pub destination: NodeId,
    /// Query route, sink first.
    pub query_path: Vec<NodeId>,
    /// Reply route, destination first.
    pub reply_path: Vec<NodeId>,
    pub query: Vec<HopRecord>,
    pub reply: Vec<HopRecord>,
}

fn payload(label: &str, destination: NodeId) -> Vec<u8> {
    let mut p = label.as_bytes().to_vec();
    p.extend_from_slice(&destination.to_le_bytes());
    p
}

/// Sends a query from the sink down `path` and the reply back up the
/// destination's chain of highest-priority relays.
///
/// Query hop `t` goes from a relay to one of its selectors and is sealed
/// under the relay's backward key; reply hops go from a selector to its
/// primary relay under the selector's forward key.
pub fn forward_query_and_reply(
    keys: &mut KeyEstablishment,
    state: &RoutingState,
    path: &[NodeId],
    tamper: Option<Tamper>,
) -> Result<DeliveryTrace, RoutingError> {
    let sink = state.sink;
    let valid = path.first() == Some(&sink) && path.windows(2).all(|w| state.nhlists.get(&w[1]).is_some_and(|l| l.contains(w[0])));
    if !valid || path.len() < 2 {
        return Err(RoutingError::InvalidPath(path.to_vec()));
    }
    let destination = *path.last().expect("checked non-empty");

    let mut hop = |direction, t: usize, from: NodeId, to: NodeId, key: GroupKeyId, body: Vec<u8>| {
        for n in [from, to] {
            if keys.keystore(n).and_then(|s| s.group_key(&key)).is_none() {
                return Err(RoutingError::MissingKey {
                    direction,
                    hop: t,
                    node: n,
                    key,
                });
            }
        }
        let corrupt = tamper == Some(Tamper { direction, hop: t });
        let env = keys
            .transmit(from, to, key, t as u32 + 1, body, corrupt)
            .map_err(|source| RoutingError::Delivery {
                direction,
                hop: t,
                from,
                to,
                source,
            })?;
        Ok(HopRecord {
            hop: t,
            from,
            to,
            key,
            payload_digest: hex::encode(Sha256::digest(&env.payload)),
        })
    };

    let mut query = Vec::with_capacity(path.len() - 1);
    for (t, w) in path.windows(2).enumerate() {
        query.push(hop(
            Direction::Query,
            t,
            w[0],
            w[1],
            GroupKeyId::backward(w[0]),
            payload("query", destination),
        )?);
    }

    let mut reply_path = vec![destination];
    let mut reply = Vec::new();
    let mut at = destination;
    while at != sink {
        let next = state
            .nhlists
            .get(&at)
            .and_then(|l| l.primary())
            .ok_or(RoutingError::Unreachable { destination, break_at: at })?;
        if reply_path.len() > state.nhlists.len() {
            return Err(RoutingError::Cycle(at));
        }
        reply.push(hop(
            Direction::Reply,
            reply.len(),
            at,
            next,
            GroupKeyId::forward(at),
            payload("reply", destination),
        )?);
        reply_path.push(next);
        at = next;
    }

    Ok(DeliveryTrace {
        destination,
        query_path: path.to_vec(),
        reply_path,
        query,
        reply,
    })
}
