use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{GroupKeyId, ShareRef};
use crate::netmodel::{KeyId, KeyRing, NodeId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SealError {
    #[error("node {node} lacks {missing} of the pairwise keys")]
    MissingPairwiseKeys { node: NodeId, missing: usize },
    #[error("node {node} does not hold {key}")]
    MissingGroupKey { node: NodeId, key: GroupKeyId },
    #[error("envelope addressed to {receiver}, opened by {opener}")]
    NotAddressed { receiver: NodeId, opener: NodeId },
    #[error("integrity check failed")]
    Integrity,
    #[error("stale counter {counter} from {sender} (last accepted {last})")]
    Replay { sender: NodeId, counter: u64, last: u64 },
}

/// Secret material behind every pool key identifier. Only holders of an id
/// (as enforced by [`Keystore`]) ever use its material.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSecrets {
    seed: u64,
}

impl PoolSecrets {
    pub fn new(seed: u64) -> Self {
        PoolSecrets { seed }
    }

    pub fn material(&self, key: KeyId) -> [u8; 16] {
        let mut h = Sha256::new();
        h.update(b"pool-key");
        h.update(self.seed.to_le_bytes());
        h.update(key.to_le_bytes());
        let d = h.finalize();
        let mut out = [0u8; 16];
        out.copy_from_slice(&d[..16]);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Seal {
    /// Sealed under every pre-distributed key the link shares.
    Pairwise {
        keys: BTreeSet<KeyId>,
    },
    Group {
        key: GroupKeyId,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    pub step: u32,
    pub sender: NodeId,
    pub receiver: NodeId,
    pub counter: u64,
    pub seal: Seal,
    #[serde(with = "hex_bytes")]
    pub payload: Vec<u8>,
    pub tag: String,
    /// Shares whose XOR the payload carries; empty for public payloads.
    pub terms: Vec<ShareRef>,
}

impl Envelope {
    pub fn required_key_count(&self) -> usize {
        match &self.seal {
            Seal::Pairwise { keys } => keys.len(),
            Seal::Group { .. } => 1,
        }
    }

    pub fn payload_digest(&self) -> String {
        hex::encode(Sha256::digest(&self.payload))
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

fn compute_tag(step: u32, sender: NodeId, receiver: NodeId, counter: u64, seal: &Seal, payload: &[u8], key: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(b"envelope");
    h.update(step.to_le_bytes());
    h.update(sender.to_le_bytes());
    h.update(receiver.to_le_bytes());
    h.update(counter.to_le_bytes());
    h.update(serde_json::to_vec(seal).expect("seal serialises"));
    h.update((payload.len() as u64).to_le_bytes());
    h.update(payload);
    h.update(key);
    hex::encode(h.finalize())
}

/// Everything one node can use to seal and open envelopes.
#[derive(Debug, Clone)]
pub struct Keystore {
    node: NodeId,
    ring: KeyRing,
    pool: PoolSecrets,
    groups: BTreeMap<GroupKeyId, u128>,
    next_counter: u64,
    last_seen: BTreeMap<NodeId, u64>,
}

impl Keystore {
    pub fn new(node: NodeId, ring: KeyRing, pool: PoolSecrets) -> Self {
        Keystore {
            node,
            ring,
            pool,
            groups: BTreeMap::new(),
            next_counter: 0,
            last_seen: BTreeMap::new(),
        }
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn ring(&self) -> &KeyRing {
        &self.ring
    }

    pub fn group_key(&self, id: &GroupKeyId) -> Option<u128> {
        self.groups.get(id).copied()
    }

    pub fn group_keys(&self) -> &BTreeMap<GroupKeyId, u128> {
        &self.groups
    }

    pub fn install(&mut self, id: GroupKeyId, material: u128) {
        self.groups.insert(id, material);
    }

    fn key_bytes(&self, seal: &Seal) -> Result<Vec<u8>, SealError> {
        match seal {
            Seal::Pairwise { keys } => {
                let missing = keys.iter().filter(|k| !self.ring.contains(**k)).count();
                if missing > 0 || keys.is_empty() {
                    return Err(SealError::MissingPairwiseKeys {
                        node: self.node,
                        missing: missing.max(1),
                    });
                }
                Ok(keys.iter().flat_map(|k| self.pool.material(*k)).collect())
            }
            Seal::Group { key } => self
                .groups
                .get(key)
                .map(|m| m.to_le_bytes().to_vec())
                .ok_or(SealError::MissingGroupKey {
                    node: self.node,
                    key: *key,
                }),
        }
    }

    pub fn seal(&mut self, step: u32, receiver: NodeId, seal: Seal, payload: Vec<u8>, terms: Vec<ShareRef>) -> Result<Envelope, SealError> {
        let key = self.key_bytes(&seal)?;
        self.next_counter += 1;
        let tag = compute_tag(step, self.node, receiver, self.next_counter, &seal, &payload, &key);
        Ok(Envelope {
            step,
            sender: self.node,
            receiver,
            counter: self.next_counter,
            seal,
            payload,
            tag,
            terms,
        })
    }

    /// Verifies and accepts an envelope. Counters from each sender must
    /// strictly increase.
    pub fn open(&mut self, env: &Envelope) -> Result<Vec<u8>, SealError> {
        if env.receiver != self.node {
            return Err(SealError::NotAddressed {
                receiver: env.receiver,
                opener: self.node,
            });
        }
        let key = self.key_bytes(&env.seal)?;
        let tag = compute_tag(env.step, env.sender, env.receiver, env.counter, &env.seal, &env.payload, &key);
        if tag != env.tag {
            return Err(SealError::Integrity);
        }
        let last = self.last_seen.get(&env.sender).copied().unwrap_or(0);
        if env.counter <= last {
            return Err(SealError::Replay {
                sender: env.sender,
                counter: env.counter,
                last,
            });
        }
        self.last_seen.insert(env.sender, env.counter);
        Ok(env.payload.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> (Keystore, Keystore) {
        let pool = PoolSecrets::new(3);
        (
            Keystore::new(1, KeyRing::from_keys([1, 2, 3]), pool),
            Keystore::new(2, KeyRing::from_keys([2, 3, 4]), pool),
        )
    }

    fn shared() -> Seal {
        Seal::Pairwise {
            keys: [2, 3].into_iter().collect(),
        }
    }

    #[test]
    fn seal_and_open() {
        let (mut a, mut b) = pair();
        let env = a.seal(1, 2, shared(), b"hello".to_vec(), vec![]).unwrap();
        assert_eq!(b.open(&env).unwrap(), b"hello");
        assert_eq!(
            b.open(&env),
            Err(SealError::Replay {
                sender: 1,
                counter: 1,
                last: 1
            })
        );
    }

    #[test]
    fn missing_keys_and_tampering() {
        let (mut a, mut b) = pair();
        let wide = Seal::Pairwise {
            keys: [1, 2].into_iter().collect(),
        };
        let env = a.seal(1, 2, wide, vec![1], vec![]).unwrap();
        assert!(matches!(b.open(&env), Err(SealError::MissingPairwiseKeys { node: 2, .. })));

        let mut env = a.seal(2, 2, shared(), vec![1, 2, 3], vec![]).unwrap();
        env.payload[0] ^= 1;
        assert_eq!(b.open(&env), Err(SealError::Integrity));

        let env = a.seal(3, 1, shared(), vec![], vec![]).unwrap();
        assert!(matches!(b.open(&env), Err(SealError::NotAddressed { .. })));
    }

    #[test]
    fn group_seal_requires_key() {
        let (mut a, mut b) = pair();
        let id = GroupKeyId::forward(1);
        assert!(a.seal(1, 2, Seal::Group { key: id }, vec![], vec![]).is_err());
        a.install(id, 99);
        let env = a.seal(1, 2, Seal::Group { key: id }, vec![7], vec![]).unwrap();
        assert!(matches!(b.open(&env), Err(SealError::MissingGroupKey { .. })));
        b.install(id, 98);
        assert_eq!(b.open(&env), Err(SealError::Integrity));
        b.install(id, 99);
        assert_eq!(b.open(&env).unwrap(), vec![7]);
    }
}
