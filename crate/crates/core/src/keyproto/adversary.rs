use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::envelope::Seal;
use super::exchange::{Outcome, ProtocolTranscript};
use super::{GroupKeyId, ShareRef};
use crate::netmodel::{KeyId, NetworkGraph, NodeId};

/// Result of the derivation closure for one target key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Derivation {
    pub target: GroupKeyId,
    pub compromised: Vec<NodeId>,
    pub derivable: bool,
    /// Envelopes the adversary could open, as (transcript index, envelope index).
    pub opened: Vec<(usize, usize)>,
    /// Rank of the XOR span of everything learned.
    pub rank: usize,
}

/// Linear span over GF(2) of share combinations, one bit per share.
struct Span {
    index: BTreeMap<ShareRef, usize>,
    rows: BTreeMap<usize, Vec<u64>>,
}

impl Span {
    fn new(index: BTreeMap<ShareRef, usize>) -> Self {
        Span {
            index,
            rows: BTreeMap::new(),
        }
    }

    fn vector(&self, terms: &[ShareRef]) -> Vec<u64> {
        let mut v = vec![0u64; self.index.len().div_ceil(64).max(1)];
        for t in terms {
            let i = self.index[t];
            v[i / 64] ^= 1 << (i % 64);
        }
        v
    }

    fn top_bit(v: &[u64]) -> Option<usize> {
        v.iter()
            .enumerate()
            .rev()
            .find(|(_, w)| **w != 0)
            .map(|(i, w)| i * 64 + 63 - w.leading_zeros() as usize)
    }

    fn reduce(&self, mut v: Vec<u64>) -> Vec<u64> {
        while let Some(p) = Self::top_bit(&v) {
            match self.rows.get(&p) {
                Some(row) => v.iter_mut().zip(row).for_each(|(a, b)| *a ^= b),
                None => break,
            }
        }
        v
    }

    /// Returns true if the span grew.
    fn insert(&mut self, terms: &[ShareRef]) -> bool {
        let v = self.reduce(self.vector(terms));
        match Self::top_bit(&v) {
            Some(p) => {
                self.rows.insert(p, v);
                true
            }
            None => false,
        }
    }

    fn contains(&self, terms: &[ShareRef]) -> bool {
        Self::top_bit(&self.reduce(self.vector(terms))).is_none()
    }
}

/// Everything an adversary learns from the transcripts after capturing a
/// set of nodes: their rings, their shares and the group keys they belong
/// to, closed under opening envelopes and XOR.
pub struct Closure {
    compromised: Vec<NodeId>,
    keys: BTreeMap<GroupKeyId, Vec<ShareRef>>,
    span: Span,
    opened: Vec<(usize, usize)>,
}

impl Closure {
    pub fn derives(&self, target: GroupKeyId) -> bool {
        self.keys.get(&target).is_some_and(|shares| self.span.contains(shares))
    }

    pub fn derivable_keys(&self) -> Vec<GroupKeyId> {
        self.keys.keys().copied().filter(|k| self.derives(*k)).collect()
    }

    pub fn opened(&self) -> &[(usize, usize)] {
        &self.opened
    }

    pub fn rank(&self) -> usize {
        self.span.rows.len()
    }

    pub fn derivation(&self, target: GroupKeyId) -> Derivation {
        Derivation {
            target,
            compromised: self.compromised.clone(),
            derivable: self.derives(target),
            opened: self.opened.clone(),
            rank: self.rank(),
        }
    }
}

pub fn adversary_closure(graph: &NetworkGraph, transcripts: &[ProtocolTranscript], compromised: &BTreeSet<NodeId>) -> Closure {
    let mut keys: BTreeMap<GroupKeyId, (Vec<NodeId>, Vec<ShareRef>)> = BTreeMap::new();
    let mut index = BTreeMap::new();
    for t in transcripts {
        let refs = t.envelopes.iter().flat_map(|e| e.terms.iter());
        let established = match &t.outcome {
            Outcome::Established { key, shares, .. } => {
                keys.insert(*key, (t.members.clone(), shares.clone()));
                shares.as_slice()
            }
            Outcome::Failed { .. } => &[],
        };
        for r in refs.chain(established) {
            let n = index.len();
            index.entry(*r).or_insert(n);
        }
    }

    let ring: BTreeSet<KeyId> = compromised
        .iter()
        .filter_map(|&n| graph.node(n))
        .flat_map(|n| n.ring.keys().iter().copied())
        .collect();

    let mut span = Span::new(index.clone());
    for r in index.keys().filter(|r| compromised.contains(&r.owner)) {
        span.insert(&[*r]);
    }
    for (members, shares) in keys.values() {
        if members.iter().any(|m| compromised.contains(m)) {
            span.insert(shares);
        }
    }

    let mut opened = BTreeSet::new();
    loop {
        let mut grew = false;
        for (ti, t) in transcripts.iter().enumerate() {
            for (ei, e) in t.envelopes.iter().enumerate() {
                if opened.contains(&(ti, ei)) {
                    continue;
                }
                let readable = match &e.seal {
                    Seal::Pairwise { keys } => keys.is_subset(&ring),
                    Seal::Group { key } => keys.get(key).is_some_and(|(_, shares)| span.contains(shares)),
                };
                if readable {
                    opened.insert((ti, ei));
                    if !e.terms.is_empty() {
                        span.insert(&e.terms);
                    }
                    grew = true;
                }
            }
        }
        if !grew {
            break;
        }
    }

    Closure {
        compromised: compromised.iter().copied().collect(),
        keys: keys.into_iter().map(|(k, (_, s))| (k, s)).collect(),
        span,
        opened: opened.into_iter().collect(),
    }
}

/// Decides whether an adversary holding the rings, shares and group keys of
/// `compromised` can compute the material of `target` from the recorded
/// transcripts.
pub fn adversary_can_derive(
    graph: &NetworkGraph,
    transcripts: &[ProtocolTranscript],
    compromised: &BTreeSet<NodeId>,
    target: GroupKeyId,
) -> Derivation {
    adversary_closure(graph, transcripts, compromised).derivation(target)
}
