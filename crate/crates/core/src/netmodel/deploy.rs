use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{shared_keys, Area, KeyPool, KeyRing, LinkInfo, ModelError, NetworkGraph, NodeSpec, Position, Tier};
use crate::rng::{stream, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentConfig {
    pub node_count: usize,
    pub h_fraction: f64,
    pub area: Area,
    pub range_l: f64,
    pub range_h: f64,
    /// Defaults to the centre of the area.
    pub sink_position: Option<Position>,
}

impl DeploymentConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.node_count < 2 {
            return Err(ModelError::NodeCount(self.node_count));
        }
        let Area { w, h } = self.area;
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return Err(ModelError::Area { w, h });
        }
        if !(0.0..=1.0).contains(&self.h_fraction) {
            return Err(ModelError::HFraction(self.h_fraction));
        }
        if !(self.range_l > 0.0 && self.range_h > 0.0) {
            return Err(ModelError::Range {
                range_l: self.range_l,
                range_h: self.range_h,
            });
        }
        if let Some(p) = self.sink_position {
            if !self.area.contains(&p) {
                return Err(ModelError::SinkOutside { x: p.x, y: p.y });
            }
        }
        Ok(())
    }

    /// Number of H-tier sensors; the sink is not counted as one.
    pub fn h_count(&self) -> usize {
        ((self.h_fraction * self.node_count as f64).round() as usize).min(self.node_count - 1)
    }
}

/// Places the sink (id 0) and `node_count - 1` sensors uniformly over the
/// area. Ids `1..=h_count` are H-tier, the rest L-tier. Rings are empty and
/// no links exist yet.
pub fn generate_deployment(cfg: &DeploymentConfig, seed: u64) -> Result<NetworkGraph, ModelError> {
    cfg.validate()?;
    let mut rng = stream(seed, Domain::Deployment);
    let h_count = cfg.h_count();
    let mut nodes = Vec::with_capacity(cfg.node_count);
    nodes.push(NodeSpec {
        id: 0,
        tier: Tier::Sink,
        position: cfg.sink_position.unwrap_or_else(|| cfg.area.center()),
        range: cfg.range_h,
        ring: KeyRing::default(),
    });
    for id in 1..cfg.node_count {
        let tier = if id <= h_count { Tier::H } else { Tier::L };
        let position = Position {
            x: rng.gen::<f64>() * cfg.area.w,
            y: rng.gen::<f64>() * cfg.area.h,
        };
        nodes.push(NodeSpec {
            id: id as u32,
            tier,
            position,
            range: if tier == Tier::H { cfg.range_h } else { cfg.range_l },
            ring: KeyRing::default(),
        });
    }
    NetworkGraph::new(cfg.area, None, nodes, Vec::new())
}

/// Draws each node's ring as a uniform `k`-subset of the pool: `k1` for
/// L-sensors, `k2` for H-sensors and the sink. Existing links are dropped
/// since they no longer match the rings.
pub fn assign_key_rings(graph: NetworkGraph, pool: KeyPool, k1: usize, k2: usize, seed: u64) -> Result<NetworkGraph, ModelError> {
    if k1 == 0 || k1 > k2 || k2 > pool.size() as usize {
        return Err(ModelError::RingSize { k1, k2, pool: pool.size() });
    }
    let mut rng = stream(seed, Domain::KeyRings);
    let nodes = graph
        .nodes()
        .iter()
        .map(|n| {
            let k = if n.tier == Tier::L { k1 } else { k2 };
            let picked = index::sample(&mut rng, pool.size() as usize, k);
            NodeSpec {
                ring: KeyRing::from_keys(picked.into_iter().map(|i| i as u32)),
                ..n.clone()
            }
        })
        .collect();
    graph.with_parts(nodes, Some(pool), Vec::new())
}

/// Where a link's failure probability comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum FailureModel {
    Constant {
        f: f64,
    },
    /// Independent uniform draw in `[lo, hi]` per link.
    UniformInterval {
        lo: f64,
        hi: f64,
    },
    /// `f_min` at zero distance rising linearly to `f_max` at the edge of range.
    DistanceLinear {
        f_min: f64,
        f_max: f64,
    },
}

impl Default for FailureModel {
    fn default() -> Self {
        FailureModel::Constant { f: 0.5 }
    }
}

impl FailureModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        let check = |f: f64| {
            if (0.0..1.0).contains(&f) {
                Ok(())
            } else {
                Err(ModelError::FailureProbability(f))
            }
        };
        match *self {
            FailureModel::Constant { f } => check(f),
            FailureModel::UniformInterval { lo, hi } | FailureModel::DistanceLinear { f_min: lo, f_max: hi } => {
                check(lo)?;
                check(hi)?;
                if lo > hi {
                    return Err(ModelError::FailureModel(format!("lower bound {lo} exceeds upper bound {hi}")));
                }
                Ok(())
            }
        }
    }
}

/// Connects every pair within `min(range_u, range_v)` that shares at least
/// one key, assigning failure probabilities from `model`.
pub fn build_links(graph: NetworkGraph, model: &FailureModel, seed: u64) -> Result<NetworkGraph, ModelError> {
    model.validate()?;
    let mut rng = stream(seed, Domain::Failures);
    let nodes = graph.nodes();
    let mut links = Vec::new();
    for (i, u) in nodes.iter().enumerate() {
        for v in &nodes[i + 1..] {
            let d = u.position.distance(&v.position);
            let reach = u.range.min(v.range);
            if d > reach {
                continue;
            }
            let shared = shared_keys(&u.ring, &v.ring);
            if shared.is_empty() {
                continue;
            }
            let f = match *model {
                FailureModel::Constant { f } => f,
                FailureModel::UniformInterval { lo, hi } => {
                    if hi > lo {
                        rng.gen_range(lo..=hi)
                    } else {
                        lo
                    }
                }
                FailureModel::DistanceLinear { f_min, f_max } => f_min + (f_max - f_min) * (d / reach),
            };
            links.push(LinkInfo {
                a: u.id,
                b: v.id,
                k: shared.len() as u32,
                f,
                shared_keys: shared,
            });
        }
    }
    let nodes = nodes.to_vec();
    graph.with_parts(nodes, graph.pool(), links)
}
