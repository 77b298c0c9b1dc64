//! Expected Key Average (EAK) metric and forwarder-list selection.
//!
//! A node `u` hands a packet to a priority-ordered list of forwarders
//! `v_1..v_n` (its NHList). Each transmission reaches `v_i` with probability
//! `1 - f_i`; the packet is taken by the highest-priority forwarder that
//! received it. The EAK of `u` is the sum of two parts:
//!
//! * the last-hop part: the priority-weighted number of keys on the links to
//!   the forwarders, divided by the probability that at least one of them
//!   receives the packet;
//! * the relay part: the forwarders' own EAK values weighted by the
//!   probability that each one is the forwarder that takes the packet,
//!   conditioned on at least one reception.
//!
//! Forwarders are selected greedily from the neighbour list sorted by EAK
//! (descending): a candidate is admitted while its EAK strictly exceeds the
//! current relay part. Because each admission replaces the relay part by a
//! convex combination of itself and the candidate's EAK, the relay part is
//! non-decreasing along the admitted prefix and the greedy stop point is the
//! prefix that maximises it.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::NodeId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("no forwarders")]
    NoForwarders,
    #[error("forwarder count must be at least 1")]
    ZeroForwarders,
    #[error("failure probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("EAK value {0} must be finite and non-negative")]
    Eak(f64),
    #[error("list lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("every forwarder link fails with certainty")]
    CertainFailure,
    #[error("neighbour {0} offered twice")]
    DuplicateCandidate(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialEstimate {
    /// Probability that no forwarder receives a transmission.
    pub total_failure: f64,
    /// Probability that at least one forwarder receives it.
    pub success: f64,
    /// Expected number of transmissions until the first success.
    pub trials: f64,
}

fn check_probability(f: f64) -> Result<(), MetricError> {
    if (0.0..=1.0).contains(&f) {
        Ok(())
    } else {
        Err(MetricError::Probability(f))
    }
}

pub fn total_failure_and_trials(failures: &[f64]) -> Result<TrialEstimate, MetricError> {
    if failures.is_empty() {
        return Err(MetricError::NoForwarders);
    }
    for &f in failures {
        check_probability(f)?;
    }
    let total_failure: f64 = failures.iter().product();
    let success = 1.0 - total_failure;
    if success <= 0.0 {
        return Err(MetricError::CertainFailure);
    }
    Ok(TrialEstimate {
        total_failure,
        success,
        trials: 1.0 / success,
    })
}

/// Priority probabilities of an `n`-entry forwarder list: each entry gets
/// half the weight of the one before it, normalised to sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardingWeights {
    weights: Vec<f64>,
}

impl ForwardingWeights {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }
}

pub fn forwarding_weights(n: usize) -> Result<ForwardingWeights, MetricError> {
    if n == 0 {
        return Err(MetricError::ZeroForwarders);
    }
    // 2^(n-i) / (2^n - 1) == 2^-i / (1 - 2^-n); the right-hand form cannot overflow.
    let norm = 1.0 - 0.5f64.powi(n as i32);
    let weights = (1..=n).map(|i| 0.5f64.powi(i as i32) / norm).collect();
    Ok(ForwardingWeights { weights })
}

fn check_lists(left: usize, right: usize) -> Result<(), MetricError> {
    if left != right {
        return Err(MetricError::LengthMismatch { left, right });
    }
    if left == 0 {
        return Err(MetricError::NoForwarders);
    }
    Ok(())
}

/// Last-hop key average: `sum(k_i * p_i) / (1 - prod f_i)` with `p_i` from
/// [`forwarding_weights`]. Lists are in priority order.
pub fn last_hop_eak(ks: &[u32], fs: &[f64]) -> Result<f64, MetricError> {
    check_lists(ks.len(), fs.len())?;
    let est = total_failure_and_trials(fs)?;
    let weights = forwarding_weights(ks.len())?;
    let weighted: f64 = ks.iter().zip(weights.as_slice()).map(|(&k, &p)| k as f64 * p).sum();
    Ok(weighted / est.success)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelayEak {
    /// `sum_i (prod_{j<i} f_j)(1 - f_i) * eak_i`.
    pub expected: f64,
    /// `expected / (1 - prod f_i)`: the relay part conditioned on delivery.
    pub conditional: f64,
}

pub fn relay_eak(neighbor_eaks: &[f64], fs: &[f64]) -> Result<RelayEak, MetricError> {
    check_lists(neighbor_eaks.len(), fs.len())?;
    for &e in neighbor_eaks {
        if !(e.is_finite() && e >= 0.0) {
            return Err(MetricError::Eak(e));
        }
    }
    let est = total_failure_and_trials(fs)?;
    let mut reach = 1.0;
    let mut expected = 0.0;
    for (&e, &f) in neighbor_eaks.iter().zip(fs) {
        expected += reach * (1.0 - f) * e;
        reach *= f;
    }
    Ok(RelayEak {
        expected,
        conditional: expected / est.success,
    })
}

pub fn total_eak(last_hop: f64, relay: f64) -> f64 {
    last_hop + relay
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EakRecord {
    pub node: NodeId,
    pub eak: f64,
    pub last_hop: f64,
    pub relay: f64,
}

impl EakRecord {
    pub fn zero(node: NodeId) -> Self {
        EakRecord {
            node,
            eak: 0.0,
            last_hop: 0.0,
            relay: 0.0,
        }
    }
}

/// A neighbour offered to [`update_eak`], with the link it is reached over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub node: NodeId,
    pub eak: f64,
    pub k: u32,
    pub f: f64,
    pub is_sink: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NhEntry {
    pub node: NodeId,
    /// 1 is the most preferred forwarder.
    pub priority: u32,
    /// The forwarder's EAK when it was selected.
    pub eak: f64,
    pub k: u32,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NhList {
    pub owner: NodeId,
    pub entries: Vec<NhEntry>,
}

impl NhList {
    pub fn empty(owner: NodeId) -> Self {
        NhList {
            owner,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.entries.iter().map(|e| e.node)
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.entries.iter().any(|e| e.node == node)
    }

    pub fn primary(&self) -> Option<NodeId> {
        self.entries.first().map(|e| e.node)
    }

    pub fn same_members(&self, other: &NhList) -> bool {
        self.nodes().eq(other.nodes())
    }
}

/// One accepted candidate and the relay part before and after it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Admission {
    pub node: NodeId,
    pub relay_before: f64,
    pub relay_after: f64,
}

impl Admission {
    pub fn delta(&self) -> f64 {
        self.relay_after - self.relay_before
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub record: EakRecord,
    pub nhlist: NhList,
    pub admissions: Vec<Admission>,
}

fn validate_candidates(candidates: &[Candidate]) -> Result<(), MetricError> {
    let mut seen = BTreeSet::new();
    for c in candidates {
        if !(0.0..1.0).contains(&c.f) {
            return Err(MetricError::Probability(c.f));
        }
        if !(c.eak.is_finite() && c.eak >= 0.0) {
            return Err(MetricError::Eak(c.eak));
        }
        if !seen.insert(c.node) {
            return Err(MetricError::DuplicateCandidate(c.node));
        }
    }
    Ok(())
}

/// The sorted neighbour list: the sink first (it always relays), then every
/// other neighbour that can relay, by EAK descending and id ascending.
/// Non-sink neighbours with zero EAK have no route and are dropped.
pub fn priority_order(candidates: &[Candidate]) -> Vec<Candidate> {
    let mut order: Vec<Candidate> = candidates.iter().copied().filter(|c| c.is_sink || c.eak > 0.0).collect();
    order.sort_by(|a, b| match (a.is_sink, b.is_sink) {
        (true, false) => Ordering::Less,
        (false, true) => Ordering::Greater,
        _ => b.eak.total_cmp(&a.eak).then(a.node.cmp(&b.node)),
    });
    order
}

fn record_for(owner: NodeId, admitted: &[Candidate]) -> Result<EakRecord, MetricError> {
    if admitted.is_empty() {
        return Ok(EakRecord::zero(owner));
    }
    let ks: Vec<u32> = admitted.iter().map(|c| c.k).collect();
    let fs: Vec<f64> = admitted.iter().map(|c| c.f).collect();
    let eaks: Vec<f64> = admitted.iter().map(|c| c.eak).collect();
    let last_hop = last_hop_eak(&ks, &fs)?;
    let relay = relay_eak(&eaks, &fs)?.conditional;
    Ok(EakRecord {
        node: owner,
        eak: total_eak(last_hop, relay),
        last_hop,
        relay,
    })
}

/// Recomputes `owner`'s forwarder list and EAK from the offered neighbours.
///
/// Admission stops at the first candidate whose EAK does not strictly exceed
/// the relay part so far, or once some admitted link is loss-free (later
/// forwarders would never receive anything).
pub fn update_eak(owner: NodeId, candidates: &[Candidate]) -> Result<Selection, MetricError> {
    validate_candidates(candidates)?;
    let mut admitted: Vec<Candidate> = Vec::new();
    let mut admissions = Vec::new();
    let mut relay = 0.0;
    let mut reach = 1.0;
    for c in priority_order(candidates) {
        if reach == 0.0 || !(c.is_sink || c.eak > relay) {
            break;
        }
        admitted.push(c);
        let eaks: Vec<f64> = admitted.iter().map(|a| a.eak).collect();
        let fs: Vec<f64> = admitted.iter().map(|a| a.f).collect();
        let after = relay_eak(&eaks, &fs)?.conditional;
        admissions.push(Admission {
            node: c.node,
            relay_before: relay,
            relay_after: after,
        });
        relay = after;
        reach *= c.f;
    }
    let record = record_for(owner, &admitted)?;
    let entries = admitted
        .iter()
        .enumerate()
        .map(|(i, c)| NhEntry {
            node: c.node,
            priority: i as u32 + 1,
            eak: c.eak,
            k: c.k,
            f: c.f,
        })
        .collect();
    Ok(Selection {
        record,
        nhlist: NhList { owner, entries },
        admissions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrefixOptimum {
    pub length: usize,
    /// Relay part of the winning prefix (the quantity being maximised).
    pub relay: f64,
    /// Full EAK of the winning prefix.
    pub eak: f64,
}

/// Exhaustive search over every prefix of the sorted neighbour list for the
/// one with the largest relay part (ties go to the shorter prefix). A
/// neighbouring sink is always part of the prefix.
pub fn best_prefix_oracle(owner: NodeId, candidates: &[Candidate]) -> Result<PrefixOptimum, MetricError> {
    validate_candidates(candidates)?;
    let order = priority_order(candidates);
    let min_len = usize::from(order.first().is_some_and(|c| c.is_sink));
    let mut best = (min_len, prefix_relay(&order[..min_len]));
    for len in min_len + 1..=order.len() {
        let value = prefix_relay(&order[..len]);
        if value > best.1 {
            best = (len, value);
        }
    }
    let record = record_for(owner, &order[..best.0])?;
    Ok(PrefixOptimum {
        length: best.0,
        relay: best.1,
        eak: record.eak,
    })
}

fn prefix_relay(prefix: &[Candidate]) -> f64 {
    if prefix.is_empty() {
        return 0.0;
    }
    let mut numerator = 0.0;
    let mut all_fail = 1.0;
    for c in prefix {
        numerator += all_fail * (1.0 - c.f) * c.eak;
        all_fail *= c.f;
    }
    numerator / (1.0 - all_fail)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetOptimum {
    pub members: Vec<NodeId>,
    pub relay: f64,
}

/// Exploratory search over *all* subsets of the sorted neighbour list (kept
/// in priority order). Limited to 20 relaying neighbours.
pub fn best_subset_search(candidates: &[Candidate]) -> Result<SubsetOptimum, MetricError> {
    validate_candidates(candidates)?;
    let order = priority_order(candidates);
    assert!(order.len() <= 20, "subset search is limited to 20 neighbours");
    let forced = order.first().is_some_and(|c| c.is_sink);
    let mut best: Option<SubsetOptimum> = None;
    let mut subset = Vec::with_capacity(order.len());
    for mask in 0u32..(1 << order.len()) {
        if forced && mask & 1 == 0 {
            continue;
        }
        subset.clear();
        subset.extend(order.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, c)| *c));
        let value = prefix_relay(&subset);
        if best.as_ref().is_none_or(|b| value > b.relay) {
            best = Some(SubsetOptimum {
                members: subset.iter().map(|c| c.node).collect(),
                relay: value,
            });
        }
    }
    Ok(best.expect("at least the empty or sink-only subset is evaluated"))
}

/// Exploratory: the prefix with the largest *full* EAK (last hop included).
pub fn best_prefix_by_total(owner: NodeId, candidates: &[Candidate]) -> Result<PrefixOptimum, MetricError> {
    validate_candidates(candidates)?;
    let order = priority_order(candidates);
    let min_len = usize::from(order.first().is_some_and(|c| c.is_sink));
    let mut best: Option<(usize, EakRecord)> = None;
    for len in min_len..=order.len() {
        let rec = record_for(owner, &order[..len])?;
        if best.as_ref().is_none_or(|b| rec.eak > b.1.eak) {
            best = Some((len, rec));
        }
    }
    let (length, rec) = best.expect("range is never empty");
    Ok(PrefixOptimum {
        length,
        relay: rec.relay,
        eak: rec.eak,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn trials_for_single_link() {
        let t = total_failure_and_trials(&[0.5]).unwrap();
        assert_eq!((t.total_failure, t.success, t.trials), (0.5, 0.5, 2.0));
    }

    #[test]
    fn trials_for_three_links() {
        let t = total_failure_and_trials(&[0.5, 0.5, 0.5]).unwrap();
        assert_eq!(t.total_failure, 0.125);
        assert_eq!(t.success, 0.875);
        assert!(close(t.trials, 8.0 / 7.0, 1e-15));
    }

    #[test]
    fn perfect_link_dominates() {
        let t = total_failure_and_trials(&[0.0, 0.9]).unwrap();
        assert_eq!((t.total_failure, t.success, t.trials), (0.0, 1.0, 1.0));
    }

    #[test]
    fn trials_errors() {
        assert_eq!(total_failure_and_trials(&[]), Err(MetricError::NoForwarders));
        assert_eq!(total_failure_and_trials(&[1.0]), Err(MetricError::CertainFailure));
        assert_eq!(total_failure_and_trials(&[1.5]), Err(MetricError::Probability(1.5)));
    }

    #[test]
    fn weights_for_three() {
        let w = forwarding_weights(3).unwrap();
        let want = [4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0];
        for (a, b) in w.as_slice().iter().zip(want) {
            assert!(close(*a, b, 1e-15));
        }
    }

    #[test]
    fn weights_small_cases() {
        assert_eq!(forwarding_weights(1).unwrap().as_slice(), &[1.0]);
        let w = forwarding_weights(4).unwrap();
        for (a, b) in w.as_slice().iter().zip([8.0 / 15.0, 4.0 / 15.0, 2.0 / 15.0, 1.0 / 15.0]) {
            assert!(close(*a, b, 1e-15));
        }
        assert_eq!(forwarding_weights(0), Err(MetricError::ZeroForwarders));
    }

    #[test]
    fn last_hop_examples() {
        // 196/7 divided by 7/8 is exactly 32.
        assert!(close(last_hop_eak(&[30, 27, 22], &[0.5; 3]).unwrap(), 32.0, 1e-9));
        assert_eq!(last_hop_eak(&[10], &[0.0]).unwrap(), 10.0);
        assert!(close(last_hop_eak(&[5, 5], &[0.5, 0.5]).unwrap(), 20.0 / 3.0, 1e-12));
    }

    #[test]
    fn last_hop_errors() {
        assert_eq!(
            last_hop_eak(&[1, 2], &[0.5]),
            Err(MetricError::LengthMismatch { left: 2, right: 1 })
        );
        assert_eq!(last_hop_eak(&[], &[]), Err(MetricError::NoForwarders));
        assert_eq!(last_hop_eak(&[3, 4], &[1.0, 1.0]), Err(MetricError::CertainFailure));
    }

    #[test]
    fn relay_examples() {
        let r = relay_eak(&[13.5], &[0.0]).unwrap();
        assert_eq!((r.expected, r.conditional), (13.5, 13.5));
        let r = relay_eak(&[10.0, 8.0], &[0.5, 0.5]).unwrap();
        assert_eq!(r.expected, 7.0);
        assert!(close(r.conditional, 28.0 / 3.0, 1e-12));
        let r = relay_eak(&[0.0], &[0.5]).unwrap();
        assert_eq!((r.expected, r.conditional), (0.0, 0.0));
        assert_eq!(relay_eak(&[], &[]), Err(MetricError::NoForwarders));
        assert_eq!(relay_eak(&[1.0], &[1.0]), Err(MetricError::CertainFailure));
    }

    #[test]
    fn total_examples() {
        assert_eq!(total_eak(32.0, 0.0), 32.0);
        assert_eq!(total_eak(16.0, 20.0), 36.0);
        assert_eq!(total_eak(0.0, 0.0), 0.0);
    }

    fn cand(node: NodeId, eak: f64, k: u32, f: f64) -> Candidate {
        Candidate {
            node,
            eak,
            k,
            f,
            is_sink: false,
        }
    }

    fn sink(node: NodeId, k: u32, f: f64) -> Candidate {
        Candidate {
            node,
            eak: 0.0,
            k,
            f,
            is_sink: true,
        }
    }

    #[test]
    fn isolated_node() {
        let s = update_eak(7, &[]).unwrap();
        assert_eq!(s.record, EakRecord::zero(7));
        assert!(s.nhlist.is_empty());
    }

    #[test]
    fn sink_only_neighbour() {
        let s = update_eak(1, &[sink(0, 10, 0.5)]).unwrap();
        assert_eq!(s.nhlist.nodes().collect::<Vec<_>>(), vec![0]);
        assert_eq!(s.record.last_hop, 20.0);
        assert_eq!(s.record.relay, 0.0);
        assert_eq!(s.record.eak, 20.0);
    }

    #[test]
    fn prefix_stops_at_first_failure() {
        let s = update_eak(9, &[cand(1, 20.0, 4, 0.5), cand(2, 5.0, 40, 0.5)]).unwrap();
        assert_eq!(s.nhlist.nodes().collect::<Vec<_>>(), vec![1]);
        assert_eq!(s.record.relay, 20.0);
        assert_eq!(s.admissions.len(), 1);
    }

    #[test]
    fn sink_leads_and_others_follow() {
        // sink first (relay 0), then 24 > 0, then 20 > 24/3
        let s = update_eak(3, &[cand(1, 24.0, 27, 0.5), cand(2, 20.0, 22, 0.5), sink(0, 30, 0.5)]).unwrap();
        assert_eq!(s.nhlist.nodes().collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(s.nhlist.entries.iter().map(|e| e.priority).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert!(close(s.record.last_hop, 32.0, 1e-12));
        assert!(close(s.record.relay, 8.5 / 0.875, 1e-12));
        assert!(s.admissions.iter().all(|a| a.delta() >= 0.0));
    }

    #[test]
    fn equal_eak_ties_reject() {
        let s = update_eak(5, &[cand(2, 10.0, 1, 0.5), cand(1, 10.0, 1, 0.5)]).unwrap();
        // lower id first on ties; the second equal candidate does not exceed the relay part
        assert_eq!(s.nhlist.nodes().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn unreachable_neighbours_are_skipped() {
        let s = update_eak(5, &[cand(2, 0.0, 9, 0.1)]).unwrap();
        assert!(s.nhlist.is_empty());
        assert_eq!(s.record.eak, 0.0);
    }

    #[test]
    fn loss_free_link_ends_the_list() {
        let s = update_eak(5, &[sink(0, 3, 0.5), cand(1, 10.0, 2, 0.0), cand(2, 9.0, 2, 0.2)]).unwrap();
        assert_eq!(s.nhlist.nodes().collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn bad_candidates() {
        assert_eq!(update_eak(0, &[cand(1, 1.0, 1, 1.0)]), Err(MetricError::Probability(1.0)));
        assert_eq!(
            update_eak(0, &[cand(1, 1.0, 1, 0.1), cand(1, 2.0, 1, 0.1)]),
            Err(MetricError::DuplicateCandidate(1))
        );
        assert!(matches!(update_eak(0, &[cand(1, f64::NAN, 1, 0.1)]), Err(MetricError::Eak(_))));
    }

    #[test]
    fn oracle_single_neighbour() {
        let o = best_prefix_oracle(4, &[cand(1, 3.0, 2, 0.3)]).unwrap();
        assert_eq!(o.length, 1);
        let o = best_prefix_oracle(4, &[cand(1, 0.0, 2, 0.3)]).unwrap();
        assert_eq!(o.length, 0);
    }

    #[test]
    fn oracle_matches_worked_example() {
        let cands = [sink(0, 30, 0.5), cand(1, 0.0, 27, 0.5), cand(2, 0.0, 22, 0.5)];
        let g = update_eak(9, &cands).unwrap();
        let o = best_prefix_oracle(9, &cands).unwrap();
        assert_eq!(o.length, g.nhlist.len());
        assert_eq!(o.eak, g.record.eak);

        let cands = [sink(0, 30, 0.5), cand(1, 24.0, 27, 0.5), cand(2, 20.0, 22, 0.5)];
        let g = update_eak(9, &cands).unwrap();
        let o = best_prefix_oracle(9, &cands).unwrap();
        assert_eq!((o.length, o.eak), (3, g.record.eak));
    }

    #[test]
    fn subset_search_includes_prefix_optimum() {
        let cands = [cand(1, 9.0, 3, 0.4), cand(2, 7.0, 5, 0.2), sink(0, 2, 0.6)];
        let p = best_prefix_oracle(8, &cands).unwrap();
        let s = best_subset_search(&cands).unwrap();
        assert!(s.relay >= p.relay);
        assert_eq!(s.members[0], 0);
    }
}
