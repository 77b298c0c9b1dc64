// Shared generators and oracles for the integration tests. Each test binary
// uses a different subset, hence the allow.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use eakroute::config::RandomNetwork;
use eakroute::eak::Candidate;
use eakroute::keyproto::{GroupKeyId, KeyEstablishment, Seal};
use eakroute::netmodel::{Area, FailureModel, KeyId, NetworkGraph, NodeId};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random deployment with realistic rings and heterogeneous link loss.
pub fn random_graph(seed: u64, n: usize) -> NetworkGraph {
    RandomNetwork {
        node_count: n,
        area: Area { w: 100.0, h: 100.0 },
        failure_model: FailureModel::UniformInterval { lo: 0.05, hi: 0.9 },
        ..RandomNetwork::default()
    }
    .build(seed)
    .expect("valid random network")
}

/// Rings drawn so that any two nodes share at least one key (25 + 25 > 40),
/// so every in-range pair is linked.
pub fn dense_key_graph(seed: u64, n: usize) -> NetworkGraph {
    let side = (n as f64).sqrt() * 14.0;
    RandomNetwork {
        node_count: n,
        area: Area { w: side, h: side },
        pool_size: 40,
        k1: 25,
        k2: 30,
        failure_model: FailureModel::UniformInterval { lo: 0.1, hi: 0.8 },
        ..RandomNetwork::default()
    }
    .build(seed)
    .expect("valid dense network")
}

/// The first `count` connected dense-key graphs with 2..=60 nodes.
pub fn connected_dense_graphs(count: usize, base: u64) -> Vec<(u64, NetworkGraph)> {
    let mut out = Vec::with_capacity(count);
    let mut seed = base;
    while out.len() < count {
        let n = 2 + (seed % 59) as usize;
        let g = dense_key_graph(seed, n);
        if g.is_connected() {
            out.push((seed, g));
        }
        seed += 1;
    }
    out
}

/// `count` random graphs with 2..=60 nodes, connected or not.
pub fn random_graphs(count: usize, base: u64) -> Vec<(u64, NetworkGraph)> {
    (0..count as u64)
        .map(|i| {
            let seed = base + i;
            (seed, random_graph(seed, 2 + (seed % 59) as usize))
        })
        .collect()
}

/// Neighbour records for `update_eak`; optionally one of them is the sink.
pub fn random_candidates(r: &mut ChaCha8Rng, max: usize, with_sink: bool) -> Vec<Candidate> {
    let m = r.gen_range(1..=max);
    let sink_slot = if with_sink { Some(r.gen_range(0..m)) } else { None };
    (0..m)
        .map(|i| {
            let is_sink = sink_slot == Some(i);
            Candidate {
                node: i as NodeId + 1,
                eak: if is_sink || r.gen_bool(0.1) {
                    0.0
                } else {
                    // Coarse values make exact ties likely.
                    (r.gen_range(1..400) as f64) / 4.0
                },
                k: r.gen_range(1..=40),
                f: [0.0, 0.1, 0.25, 0.5, 0.75, 0.9][r.gen_range(0..6)],
                is_sink,
            }
        })
        .collect()
}

/// Linear span over GF(2)^128 of concrete 128-bit values.
#[derive(Default)]
pub struct ValueSpan {
    basis: BTreeMap<u32, u128>,
}

impl ValueSpan {
    fn reduce(&self, mut v: u128) -> u128 {
        while v != 0 {
            let top = 127 - v.leading_zeros();
            match self.basis.get(&top) {
                Some(b) => v ^= b,
                None => break,
            }
        }
        v
    }

    pub fn insert(&mut self, v: u128) -> bool {
        let r = self.reduce(v);
        if r == 0 {
            return false;
        }
        self.basis.insert(127 - r.leading_zeros(), r);
        true
    }

    pub fn contains(&self, v: u128) -> bool {
        self.reduce(v) == 0
    }
}

/// Brute-force derivation oracle over concrete values: the adversary starts
/// with the compromised nodes' shares and group keys, opens every envelope
/// whose pairwise keys it holds or whose group key is in its span, and adds
/// every 16-byte payload to the span until nothing changes.
pub fn concrete_derivable(ctx: &KeyEstablishment, graph: &NetworkGraph, compromised: &BTreeSet<NodeId>, target: GroupKeyId) -> bool {
    let ring: BTreeSet<KeyId> = compromised
        .iter()
        .flat_map(|&n| graph.node(n).unwrap().ring.keys().iter().copied())
        .collect();
    let mut span = ValueSpan::default();
    for &n in compromised {
        for s in ctx.shares_of(n) {
            span.insert(s.material);
        }
        for &m in ctx.keystore(n).unwrap().group_keys().values() {
            span.insert(m);
        }
    }
    let material = |id: &GroupKeyId| ctx.group_key(id).map(|k| k.material);
    let envelopes: Vec<_> = ctx.transcripts().iter().flat_map(|t| t.envelopes.iter()).collect();
    let mut opened = vec![false; envelopes.len()];
    loop {
        let mut grew = false;
        for (i, e) in envelopes.iter().enumerate() {
            if opened[i] {
                continue;
            }
            let readable = match &e.seal {
                Seal::Pairwise { keys } => keys.is_subset(&ring),
                Seal::Group { key } => material(key).is_some_and(|m| span.contains(m)),
            };
            if readable {
                opened[i] = true;
                grew = true;
                if let Ok(bytes) = <[u8; 16]>::try_from(e.payload.as_slice()) {
                    span.insert(u128::from_le_bytes(bytes));
                }
            }
        }
        if !grew {
            break;
        }
    }
    material(&target).is_some_and(|m| span.contains(m))
}
