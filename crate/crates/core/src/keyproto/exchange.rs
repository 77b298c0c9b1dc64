use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::envelope::{Envelope, Keystore, PoolSecrets, Seal, SealError};
use super::{GroupKey, GroupKeyId, GroupKind, ProtocolError, Share, ShareRef, ShareSource};
use crate::netmodel::{NetworkGraph, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Established {
        key: GroupKeyId,
        shares: Vec<ShareRef>,
        digest: String,
    },
    Failed {
        step: u32,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolTranscript {
    pub kind: GroupKind,
    pub owner: NodeId,
    pub members: Vec<NodeId>,
    pub envelopes: Vec<Envelope>,
    pub outcome: Outcome,
    /// The group key as computed independently by each member.
    #[serde(skip)]
    pub member_views: BTreeMap<NodeId, u128>,
}

impl ProtocolTranscript {
    pub fn is_established(&self) -> bool {
        matches!(self.outcome, Outcome::Established { .. })
    }

    pub fn members_agree(&self) -> bool {
        let mut views = self.member_views.values();
        match views.next() {
            Some(first) => self.member_views.len() == self.members.len() && views.all(|v| v == first),
            None => false,
        }
    }

    pub fn summary(&self) -> TranscriptSummary {
        TranscriptSummary {
            kind: self.kind,
            owner: self.owner,
            members: self.members.clone(),
            outcome: self.outcome.clone(),
            steps: self
                .envelopes
                .iter()
                .map(|e| StepSummary {
                    step: e.step,
                    sender: e.sender,
                    receiver: e.receiver,
                    mode: match e.seal {
                        Seal::Pairwise { .. } => "pairwise",
                        Seal::Group { .. } => "group",
                    }
                    .to_string(),
                    required_keys: e.required_key_count(),
                    payload_digest: e.payload_digest(),
                })
                .collect(),
        }
    }
}

/// Audit view of a transcript: no key material, payloads only as digests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptSummary {
    pub kind: GroupKind,
    pub owner: NodeId,
    pub members: Vec<NodeId>,
    pub outcome: Outcome,
    pub steps: Vec<StepSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepSummary {
    pub step: u32,
    pub sender: NodeId,
    pub receiver: NodeId,
    pub mode: String,
    pub required_keys: usize,
    pub payload_digest: String,
}

fn key_digest(material: u128) -> String {
    hex::encode(&Sha256::digest(material.to_le_bytes())[..8])
}

fn setup_payload(label: &[u8], from: NodeId, to: NodeId) -> Vec<u8> {
    let mut p = label.to_vec();
    p.extend_from_slice(&from.to_le_bytes());
    p.extend_from_slice(&to.to_le_bytes());
    p
}

fn material_of(payload: &[u8]) -> Option<u128> {
    payload.try_into().ok().map(u128::from_le_bytes)
}

/// Runs key-establishment protocols over a graph and keeps every node's
/// keystore, the share ledger and the transcripts.
#[derive(Debug, Clone)]
pub struct KeyEstablishment {
    graph: NetworkGraph,
    stores: Vec<Keystore>,
    shares: ShareSource,
    ledger: BTreeMap<ShareRef, u128>,
    keys: BTreeMap<GroupKeyId, GroupKey>,
    transcripts: Vec<ProtocolTranscript>,
}

type Interceptor<'a> = &'a mut dyn FnMut(&mut Envelope);

impl KeyEstablishment {
    pub fn new(graph: &NetworkGraph, seed: u64) -> Self {
        let pool = PoolSecrets::new(seed);
        let stores = graph.nodes().iter().map(|n| Keystore::new(n.id, n.ring.clone(), pool)).collect();
        KeyEstablishment {
            graph: graph.clone(),
            stores,
            shares: ShareSource::new(seed),
            ledger: BTreeMap::new(),
            keys: BTreeMap::new(),
            transcripts: Vec::new(),
        }
    }

    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn keystore(&self, node: NodeId) -> Option<&Keystore> {
        self.stores.get(node as usize)
    }

    pub fn keystore_mut(&mut self, node: NodeId) -> Option<&mut Keystore> {
        self.stores.get_mut(node as usize)
    }

    pub fn group_key(&self, id: &GroupKeyId) -> Option<&GroupKey> {
        self.keys.get(id)
    }

    pub fn group_keys(&self) -> impl Iterator<Item = &GroupKey> {
        self.keys.values()
    }

    pub fn transcripts(&self) -> &[ProtocolTranscript] {
        &self.transcripts
    }

    /// Shares generated by `node` so far (what an adversary capturing it learns).
    pub fn shares_of(&self, node: NodeId) -> Vec<Share> {
        self.ledger
            .iter()
            .filter(|(r, _)| r.owner == node)
            .map(|(r, &m)| Share {
                owner: r.owner,
                counter: r.counter,
                material: m,
            })
            .collect()
    }

    fn check_node(&self, n: NodeId) -> Result<(), ProtocolError> {
        if (n as usize) < self.stores.len() {
            Ok(())
        } else {
            Err(ProtocolError::UnknownNode(n))
        }
    }

    fn check_members(&self, owner: NodeId, members: &[NodeId]) -> Result<(), ProtocolError> {
        self.check_node(owner)?;
        if members.is_empty() {
            return Err(ProtocolError::NoMembers);
        }
        let mut seen = BTreeSet::from([owner]);
        for &m in members {
            self.check_node(m)?;
            if !seen.insert(m) {
                return Err(ProtocolError::DuplicateMember(m));
            }
        }
        Ok(())
    }

    fn fresh_share(&mut self, node: NodeId) -> Share {
        let s = self.shares.next(node);
        self.ledger.insert(s.reference(), s.material);
        s
    }

    fn seal(
        &mut self,
        from: NodeId,
        step: u32,
        to: NodeId,
        seal: Seal,
        payload: Vec<u8>,
        terms: Vec<ShareRef>,
    ) -> Result<Envelope, SealError> {
        self.stores[from as usize].seal(step, to, seal, payload, terms)
    }

    /// Re-delivers an envelope to its receiver (used to exercise replay checks).
    pub fn redeliver(&mut self, env: &Envelope) -> Result<Vec<u8>, SealError> {
        self.stores[env.receiver as usize].open(env)
    }

    /// Seals `payload` at `from` under an established group key and opens it
    /// at `to`. `tamper` flips a payload bit in transit.
    pub fn transmit(
        &mut self,
        from: NodeId,
        to: NodeId,
        key: GroupKeyId,
        step: u32,
        payload: Vec<u8>,
        tamper: bool,
    ) -> Result<Envelope, SealError> {
        let mut env = self.stores[from as usize].seal(step, to, Seal::Group { key }, payload, vec![])?;
        if tamper {
            match env.payload.first_mut() {
                Some(b) => *b ^= 1,
                None => env.payload.push(0),
            }
        }
        self.stores[to as usize].open(&env)?;
        Ok(env)
    }

    /// Selector-side forward-key exchange with its relays.
    ///
    /// Invites go out first, each relay answers with a fresh share, and the
    /// selector finally sends every relay the XOR of all shares except that
    /// relay's own. Every message on the selector↔relay link is sealed under
    /// all pre-distributed keys the link shares.
    pub fn run_fr_key_exchange(&mut self, selector: NodeId, relays: &[NodeId]) -> Result<ProtocolTranscript, ProtocolError> {
        self.run_fr_key_exchange_with(selector, relays, &mut |_| {})
    }

    pub fn run_fr_key_exchange_with(
        &mut self,
        selector: NodeId,
        relays: &[NodeId],
        intercept: Interceptor<'_>,
    ) -> Result<ProtocolTranscript, ProtocolError> {
        self.check_members(selector, relays)?;
        let mut channels = Vec::with_capacity(relays.len());
        for &r in relays {
            let link = self
                .graph
                .link(selector, r)
                .ok_or(ProtocolError::NoPairwiseChannel { selector, relay: r })?;
            channels.push(Seal::Pairwise {
                keys: link.shared_keys.clone(),
            });
        }

        let mut members = vec![selector];
        members.extend_from_slice(relays);
        let mut run = Run::new(GroupKind::Forward, selector, members);

        let mut step = 1;
        for (&r, seal) in relays.iter().zip(&channels) {
            let env = self.seal(selector, step, r, seal.clone(), setup_payload(b"fR-invite", selector, r), vec![])?;
            if !run.deliver(self, env, intercept) {
                return Ok(run.finish(self));
            }
            step += 1;
        }

        let mut relay_shares = Vec::with_capacity(relays.len());
        for (&r, seal) in relays.iter().zip(&channels) {
            let share = self.fresh_share(r);
            run.own_share.insert(r, share);
            let env = self.seal(
                r,
                step,
                selector,
                seal.clone(),
                share.material.to_le_bytes().to_vec(),
                vec![share.reference()],
            )?;
            let terms = env.terms.clone();
            let Some(received) = run.deliver_material(self, env, intercept) else {
                return Ok(run.finish(self));
            };
            relay_shares.push((received, terms));
            step += 1;
        }

        let own = self.fresh_share(selector);
        let mut key = own.material;
        let mut all_terms = vec![own.reference()];
        for (m, terms) in &relay_shares {
            key ^= m;
            all_terms.extend(terms);
        }
        run.views.insert(selector, key);
        run.shares = all_terms.clone();

        for (i, (&r, seal)) in relays.iter().zip(&channels).enumerate() {
            let partial = key ^ relay_shares[i].0;
            let terms = all_terms.iter().copied().filter(|t| !relay_shares[i].1.contains(t)).collect();
            let env = self.seal(selector, step, r, seal.clone(), partial.to_le_bytes().to_vec(), terms)?;
            let Some(received) = run.deliver_material(self, env, intercept) else {
                return Ok(run.finish(self));
            };
            run.views.insert(r, received ^ run.own_share[&r].material);
            step += 1;
        }

        run.complete = true;
        Ok(run.finish(self))
    }

    /// Node-side backward-key exchange with its selectors, carried over the
    /// forward keys the node already shares with each of them.
    ///
    /// Steps `1..=m` are setup messages, `m+1..=2m` the selectors' shares, and
    /// step `2m+1` delivers each selector the XOR of every share but its own.
    pub fn run_br_key_exchange(&mut self, node: NodeId, selectors: &[NodeId]) -> Result<ProtocolTranscript, ProtocolError> {
        self.run_br_key_exchange_with(node, selectors, &mut |_| {})
    }

    pub fn run_br_key_exchange_with(
        &mut self,
        node: NodeId,
        selectors: &[NodeId],
        intercept: Interceptor<'_>,
    ) -> Result<ProtocolTranscript, ProtocolError> {
        self.check_members(node, selectors)?;
        let mut channels = Vec::with_capacity(selectors.len());
        for &s in selectors {
            let id = GroupKeyId::forward(s);
            let held = |n: NodeId| self.stores[n as usize].group_key(&id).is_some();
            if !held(node) || !held(s) {
                return Err(ProtocolError::MissingForwardKey { node, selector: s });
            }
            channels.push(Seal::Group { key: id });
        }

        let mut members = vec![node];
        members.extend_from_slice(selectors);
        let mut run = Run::new(GroupKind::Backward, node, members);

        let mut step = 1;
        for (&s, seal) in selectors.iter().zip(&channels) {
            let env = self.seal(node, step, s, seal.clone(), setup_payload(b"bR-setup", node, s), vec![])?;
            if !run.deliver(self, env, intercept) {
                return Ok(run.finish(self));
            }
            step += 1;
        }

        let mut selector_shares = Vec::with_capacity(selectors.len());
        for (&s, seal) in selectors.iter().zip(&channels) {
            let share = self.fresh_share(s);
            run.own_share.insert(s, share);
            let env = self.seal(
                s,
                step,
                node,
                seal.clone(),
                share.material.to_le_bytes().to_vec(),
                vec![share.reference()],
            )?;
            let Some(received) = run.deliver_material(self, env, intercept) else {
                return Ok(run.finish(self));
            };
            selector_shares.push((received, share.reference()));
            step += 1;
        }

        let own = self.fresh_share(node);
        let mut key = own.material;
        let mut all_terms = vec![own.reference()];
        for (m, r) in &selector_shares {
            key ^= m;
            all_terms.push(*r);
        }
        run.views.insert(node, key);
        run.shares = all_terms.clone();

        for (i, (&s, seal)) in selectors.iter().zip(&channels).enumerate() {
            let partial = key ^ selector_shares[i].0;
            let terms = all_terms.iter().copied().filter(|t| *t != selector_shares[i].1).collect();
            let env = self.seal(node, step, s, seal.clone(), partial.to_le_bytes().to_vec(), terms)?;
            let Some(received) = run.deliver_material(self, env, intercept) else {
                return Ok(run.finish(self));
            };
            run.views.insert(s, received ^ run.own_share[&s].material);
        }

        run.complete = true;
        Ok(run.finish(self))
    }
}

impl From<SealError> for ProtocolError {
    fn from(e: SealError) -> Self {
        ProtocolError::Failed {
            owner: 0,
            step: 0,
            reason: format!("could not seal: {e}"),
        }
    }
}

/// In-flight state of one protocol run.
struct Run {
    kind: GroupKind,
    owner: NodeId,
    members: Vec<NodeId>,
    envelopes: Vec<Envelope>,
    own_share: BTreeMap<NodeId, Share>,
    views: BTreeMap<NodeId, u128>,
    shares: Vec<ShareRef>,
    failure: Option<(u32, String)>,
    complete: bool,
}

impl Run {
    fn new(kind: GroupKind, owner: NodeId, members: Vec<NodeId>) -> Self {
        Run {
            kind,
            owner,
            members,
            envelopes: Vec::new(),
            own_share: BTreeMap::new(),
            views: BTreeMap::new(),
            shares: Vec::new(),
            failure: None,
            complete: false,
        }
    }

    fn open(&mut self, ctx: &mut KeyEstablishment, mut env: Envelope, intercept: Interceptor<'_>) -> Option<Vec<u8>> {
        intercept(&mut env);
        let result = ctx.stores[env.receiver as usize].open(&env);
        let step = env.step;
        self.envelopes.push(env);
        match result {
            Ok(p) => Some(p),
            Err(e) => {
                self.failure = Some((step, e.to_string()));
                None
            }
        }
    }

    fn deliver(&mut self, ctx: &mut KeyEstablishment, env: Envelope, intercept: Interceptor<'_>) -> bool {
        self.open(ctx, env, intercept).is_some()
    }

    fn deliver_material(&mut self, ctx: &mut KeyEstablishment, env: Envelope, intercept: Interceptor<'_>) -> Option<u128> {
        let step = env.step;
        let payload = self.open(ctx, env, intercept)?;
        let m = material_of(&payload);
        if m.is_none() {
            self.failure = Some((step, "malformed key material".into()));
        }
        m
    }

    fn finish(self, ctx: &mut KeyEstablishment) -> ProtocolTranscript {
        let id = GroupKeyId {
            kind: self.kind,
            owner: self.owner,
        };
        let outcome = match (self.complete, self.failure) {
            (true, None) => {
                let material = self.views[&self.owner];
                for (&n, &m) in &self.views {
                    ctx.stores[n as usize].install(id, m);
                }
                ctx.keys.insert(
                    id,
                    GroupKey {
                        id,
                        members: self.members.clone(),
                        shares: self.shares.clone(),
                        material,
                    },
                );
                Outcome::Established {
                    key: id,
                    shares: self.shares,
                    digest: key_digest(material),
                }
            }
            (_, Some((step, reason))) => Outcome::Failed { step, reason },
            (false, None) => Outcome::Failed {
                step: 0,
                reason: "incomplete run".into(),
            },
        };
        let t = ProtocolTranscript {
            kind: self.kind,
            owner: self.owner,
            members: self.members,
            envelopes: self.envelopes,
            outcome,
            member_views: self.views,
        };
        ctx.transcripts.push(t.clone());
        t
    }
}

/// Establishes a forward key for every selector with a non-empty relay list
/// and then a backward key for every node that has selectors.
pub fn establish_group_keys(
    graph: &NetworkGraph,
    relays: &BTreeMap<NodeId, Vec<NodeId>>,
    seed: u64,
) -> Result<KeyEstablishment, ProtocolError> {
    let mut ctx = KeyEstablishment::new(graph, seed);
    let mut selectors: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for (&s, rs) in relays {
        if rs.is_empty() {
            continue;
        }
        let t = ctx.run_fr_key_exchange(s, rs)?;
        if let Outcome::Failed { step, reason } = t.outcome {
            return Err(ProtocolError::Failed { owner: s, step, reason });
        }
        for &r in rs {
            selectors.entry(r).or_default().push(s);
        }
    }
    for (&n, ss) in &selectors {
        let t = ctx.run_br_key_exchange(n, ss)?;
        if let Outcome::Failed { step, reason } = t.outcome {
            return Err(ProtocolError::Failed { owner: n, step, reason });
        }
    }
    Ok(ctx)
}
