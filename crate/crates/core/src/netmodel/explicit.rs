use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{shared_keys, Area, KeyId, KeyPool, KeyRing, LinkInfo, ModelError, NetworkGraph, NodeId, NodeSpec, Position, Tier};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitNode {
    pub id: NodeId,
    pub tier: Tier,
    pub x: f64,
    pub y: f64,
    /// Keys held in addition to those of incident links.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_keys: Vec<KeyId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitLink {
    pub a: NodeId,
    pub b: NodeId,
    pub k: u32,
    pub f: f64,
    /// Explicit key ids; fresh ids are allocated when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keys: Option<Vec<KeyId>>,
}

/// Hand-specified topology. Rings are synthesised from the links so that
/// each link's shared-key set is exactly the keys it was given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitTopology {
    pub nodes: Vec<ExplicitNode>,
    pub links: Vec<ExplicitLink>,
}

impl ExplicitTopology {
    pub fn build(&self) -> Result<NetworkGraph, ModelError> {
        let mut next_key: KeyId = self
            .links
            .iter()
            .flat_map(|l| l.keys.iter().flatten())
            .chain(self.nodes.iter().flat_map(|n| n.extra_keys.iter()))
            .max()
            .map_or(0, |m| m + 1);
        let mut rings: Vec<BTreeSet<KeyId>> = vec![BTreeSet::new(); self.nodes.len()];
        let slot = |id: NodeId| -> Result<usize, ModelError> {
            if (id as usize) < self.nodes.len() {
                Ok(id as usize)
            } else {
                Err(ModelError::Graph(format!("link references unknown node {id}")))
            }
        };
        for l in &self.links {
            let keys: Vec<KeyId> = match &l.keys {
                Some(keys) => keys.clone(),
                None => {
                    let start = next_key;
                    next_key += l.k;
                    (start..next_key).collect()
                }
            };
            let (a, b) = (slot(l.a)?, slot(l.b)?);
            rings[a].extend(keys.iter().copied());
            rings[b].extend(keys.iter().copied());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            rings[i].extend(n.extra_keys.iter().copied());
        }

        let max_x = self.nodes.iter().map(|n| n.x).fold(0.0, f64::max);
        let max_y = self.nodes.iter().map(|n| n.y).fold(0.0, f64::max);
        let area = Area {
            w: max_x.max(1.0),
            h: max_y.max(1.0),
        };
        let range = area.w.hypot(area.h) + 1.0;
        let nodes: Vec<NodeSpec> = self
            .nodes
            .iter()
            .zip(rings)
            .map(|(n, ring)| NodeSpec {
                id: n.id,
                tier: n.tier,
                position: Position { x: n.x, y: n.y },
                range,
                ring: KeyRing::from_keys(ring),
            })
            .collect();

        let mut links = Vec::with_capacity(self.links.len());
        for l in &self.links {
            let shared = shared_keys(&nodes[slot(l.a)?].ring, &nodes[slot(l.b)?].ring);
            if shared.len() != l.k as usize {
                return Err(ModelError::Graph(format!(
                    "link ({}, {}) declares k={} but the rings share {} keys",
                    l.a,
                    l.b,
                    l.k,
                    shared.len()
                )));
            }
            links.push(LinkInfo {
                a: l.a,
                b: l.b,
                k: l.k,
                f: l.f,
                shared_keys: shared,
            });
        }
        let pool = KeyPool::new(next_key.max(1))?;
        NetworkGraph::new(area, Some(pool), nodes, links)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_keys_per_link() {
        let t = ExplicitTopology {
            nodes: vec![
                ExplicitNode {
                    id: 0,
                    tier: Tier::Sink,
                    x: 0.0,
                    y: 0.0,
                    extra_keys: vec![],
                },
                ExplicitNode {
                    id: 1,
                    tier: Tier::L,
                    x: 1.0,
                    y: 0.0,
                    extra_keys: vec![],
                },
                ExplicitNode {
                    id: 2,
                    tier: Tier::L,
                    x: 2.0,
                    y: 0.0,
                    extra_keys: vec![],
                },
            ],
            links: vec![
                ExplicitLink {
                    a: 0,
                    b: 1,
                    k: 10,
                    f: 0.5,
                    keys: None,
                },
                ExplicitLink {
                    a: 1,
                    b: 2,
                    k: 8,
                    f: 0.5,
                    keys: None,
                },
            ],
        };
        let g = t.build().unwrap();
        assert_eq!(g.link(0, 1).unwrap().k, 10);
        assert_eq!(g.link(1, 2).unwrap().k, 8);
        assert!(g.link(0, 2).is_none());
        assert_eq!(g.node(1).unwrap().ring.len(), 18);
        assert_eq!(g.pool().unwrap().size(), 18);
    }

    #[test]
    fn declared_k_must_match() {
        let t = ExplicitTopology {
            nodes: vec![
                ExplicitNode {
                    id: 0,
                    tier: Tier::Sink,
                    x: 0.0,
                    y: 0.0,
                    extra_keys: vec![7],
                },
                ExplicitNode {
                    id: 1,
                    tier: Tier::L,
                    x: 1.0,
                    y: 0.0,
                    extra_keys: vec![7],
                },
            ],
            links: vec![ExplicitLink {
                a: 0,
                b: 1,
                k: 2,
                f: 0.1,
                keys: Some(vec![1, 2]),
            }],
        };
        assert!(t.build().is_err());
    }
}
