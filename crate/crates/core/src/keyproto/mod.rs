//! Group-key establishment between selectors and their relays.
//!
//! Cryptography is symbolic: an envelope can be opened by whoever holds the
//! key identifiers (or group key) it was sealed under, and a SHA-256 tag over
//! the header, payload and key material detects tampering. Group keys are
//! the XOR of fresh 128-bit shares contributed by every member.

mod adversary;
mod envelope;
mod exchange;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::NodeId;
use crate::rng::{substream, Domain};

pub use adversary::{adversary_can_derive, adversary_closure, Closure, Derivation};
pub use envelope::{Envelope, Keystore, PoolSecrets, Seal, SealError};
pub use exchange::{establish_group_keys, KeyEstablishment, Outcome, ProtocolTranscript, StepSummary, TranscriptSummary};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("cannot combine an empty list of shares")]
    NoShares,
    #[error("group needs at least one other member")]
    NoMembers,
    #[error("member {0} listed twice or equal to the group owner")]
    DuplicateMember(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("no pairwise channel between selector {selector} and relay {relay}")]
    NoPairwiseChannel { selector: NodeId, relay: NodeId },
    #[error("node {node} holds no forward key shared with selector {selector}")]
    MissingForwardKey { node: NodeId, selector: NodeId },
    #[error("key establishment for {owner} failed at step {step}: {reason}")]
    Failed { owner: NodeId, step: u32, reason: String },
}

/// Identifies one share: its owner and the owner's share counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ShareRef {
    pub owner: NodeId,
    pub counter: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Share {
    pub owner: NodeId,
    pub counter: u64,
    pub material: u128,
}

impl Share {
    pub fn reference(&self) -> ShareRef {
        ShareRef {
            owner: self.owner,
            counter: self.counter,
        }
    }
}

/// Deterministic in `(seed, node, counter)`.
pub fn generate_share(seed: u64, node: NodeId, counter: u64) -> Share {
    use rand::Rng;
    let mut rng = substream(seed, Domain::Shares, (u64::from(node) << 32) ^ counter);
    Share {
        owner: node,
        counter,
        material: rng.gen(),
    }
}

/// Hands out fresh shares, bumping each node's counter per share.
#[derive(Debug, Clone)]
pub struct ShareSource {
    seed: u64,
    counters: BTreeMap<NodeId, u64>,
}

impl ShareSource {
    pub fn new(seed: u64) -> Self {
        ShareSource {
            seed,
            counters: BTreeMap::new(),
        }
    }

    pub fn next(&mut self, node: NodeId) -> Share {
        let c = self.counters.entry(node).or_insert(0);
        *c += 1;
        generate_share(self.seed, node, *c)
    }
}

pub fn combine_shares(shares: &[Share]) -> Result<u128, ProtocolError> {
    if shares.is_empty() {
        return Err(ProtocolError::NoShares);
    }
    Ok(shares.iter().fold(0, |acc, s| acc ^ s.material))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GroupKind {
    /// Selector and its forward relays (data direction).
    #[serde(rename = "fR_key")]
    Forward,
    /// A node and its selectors (query direction).
    #[serde(rename = "bR_key")]
    Backward,
}

/// `owner` is the selector for a forward key and the node for a backward key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKeyId {
    pub kind: GroupKind,
    pub owner: NodeId,
}

impl GroupKeyId {
    pub fn forward(selector: NodeId) -> Self {
        GroupKeyId {
            kind: GroupKind::Forward,
            owner: selector,
        }
    }

    pub fn backward(node: NodeId) -> Self {
        GroupKeyId {
            kind: GroupKind::Backward,
            owner: node,
        }
    }
}

impl std::fmt::Display for GroupKeyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            GroupKind::Forward => write!(f, "fR_key({})", self.owner),
            GroupKind::Backward => write!(f, "bR_key({})", self.owner),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupKey {
    pub id: GroupKeyId,
    /// Owner first, then the other members in protocol order.
    pub members: Vec<NodeId>,
    pub shares: Vec<ShareRef>,
    #[serde(skip)]
    pub material: u128,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn share(m: u128) -> Share {
        Share {
            owner: 0,
            counter: 0,
            material: m,
        }
    }

    #[test]
    fn share_determinism_and_freshness() {
        assert_eq!(generate_share(5, 3, 1), generate_share(5, 3, 1));
        assert_ne!(generate_share(5, 3, 1).material, generate_share(5, 3, 2).material);
        let mut src = ShareSource::new(5);
        let a = src.next(3);
        let b = src.next(3);
        assert_eq!((a.counter, b.counter), (1, 2));
        assert_eq!(a, generate_share(5, 3, 1));
    }

    #[test]
    fn distinct_nodes_distinct_shares() {
        let mut seen = std::collections::HashSet::new();
        for node in 0..10_000 {
            assert!(seen.insert(generate_share(77, node, 1).material), "collision at node {node}");
        }
    }

    #[test]
    fn xor_examples() {
        assert_eq!(combine_shares(&[share(1), share(2), share(4)]).unwrap() & 0xff, 0x07);
        assert_eq!(combine_shares(&[share(0xdead), share(0xdead)]).unwrap(), 0);
        assert_eq!(combine_shares(&[]), Err(ProtocolError::NoShares));
    }
}
