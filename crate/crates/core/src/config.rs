//! Scenario configuration. Every field has a default; unknown fields are
//! rejected so typos fail loudly.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixtures;
use crate::netmodel::{
    assign_key_rings, build_links, generate_deployment, Area, DeploymentConfig, ExplicitTopology, FailureModel, KeyPool, ModelError,
    NetworkGraph, NodeId, Position,
};
use crate::routing::{Mode, RoutePolicy, DEFAULT_PATH_CAP};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RandomNetwork {
    pub node_count: usize,
    pub h_fraction: f64,
    pub area: Area,
    pub range_l: f64,
    pub range_h: f64,
    pub pool_size: u32,
    pub k1: usize,
    pub k2: usize,
    pub failure_model: FailureModel,
    pub sink_position: Option<Position>,
}

impl Default for RandomNetwork {
    fn default() -> Self {
        RandomNetwork {
            node_count: 100,
            h_fraction: 0.15,
            area: Area { w: 100.0, h: 100.0 },
            range_l: 25.0,
            range_h: 40.0,
            pool_size: 1000,
            k1: 30,
            k2: 60,
            failure_model: FailureModel::default(),
            sink_position: None,
        }
    }
}

impl RandomNetwork {
    pub fn deployment(&self) -> DeploymentConfig {
        DeploymentConfig {
            node_count: self.node_count,
            h_fraction: self.h_fraction,
            area: self.area,
            range_l: self.range_l,
            range_h: self.range_h,
            sink_position: self.sink_position,
        }
    }

    pub fn build(&self, seed: u64) -> Result<NetworkGraph, ModelError> {
        let g = generate_deployment(&self.deployment(), seed)?;
        let g = assign_key_rings(g, KeyPool::new(self.pool_size)?, self.k1, self.k2, seed)?;
        build_links(g, &self.failure_model, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum Topology {
    Random(RandomNetwork),
    Fixture { name: String },
    Explicit(ExplicitTopology),
}

impl Default for Topology {
    fn default() -> Self {
        Topology::Random(RandomNetwork::default())
    }
}

impl Topology {
    pub fn build(&self, seed: u64) -> Result<NetworkGraph, ConfigError> {
        match self {
            Topology::Random(r) => Ok(r.build(seed)?),
            Topology::Fixture { name } => {
                let t = fixtures::by_name(name)
                    .ok_or_else(|| ConfigError::Invalid(format!("unknown fixture {name:?}; known: {}", fixtures::NAMES.join(", "))))?;
                Ok(t.build()?)
            }
            Topology::Explicit(t) => Ok(t.build()?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoutingConfig {
    pub mode: Mode,
    /// Also run the other mode and fail if the results differ.
    pub cross_check: bool,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        RoutingConfig {
            mode: Mode::GreedyFinalize,
            cross_check: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoutesConfig {
    pub policy: RoutePolicy,
    /// Destinations for route construction; all reachable nodes when absent.
    pub destinations: Option<Vec<NodeId>>,
    pub path_cap: usize,
    pub delivery_trials: u64,
}

impl Default for RoutesConfig {
    fn default() -> Self {
        RoutesConfig {
            policy: RoutePolicy::MaxMinKeys,
            destinations: None,
            path_cap: DEFAULT_PATH_CAP,
            delivery_trials: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub ns: Vec<usize>,
    pub fs: Vec<f64>,
    pub trials: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            ns: vec![1, 2, 3, 5],
            fs: vec![0.1, 0.5, 0.9],
            trials: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdversaryConfig {
    /// Each set is analysed against every established group key.
    pub compromised_sets: Vec<Vec<NodeId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub topology: Topology,
    pub routing: RoutingConfig,
    pub routes: RoutesConfig,
    pub mc: McConfig,
    pub adversary: AdversaryConfig,
    pub output_dir: PathBuf,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            topology: Topology::default(),
            routing: RoutingConfig::default(),
            routes: RoutesConfig::default(),
            mc: McConfig::default(),
            adversary: AdversaryConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if let Topology::Random(r) = &self.topology {
            r.deployment().validate()?;
            r.failure_model.validate()?;
            if r.k1 == 0 || r.k1 > r.k2 || r.k2 > r.pool_size as usize {
                return bad("key ring sizes must satisfy 1 <= k1 <= k2 <= pool_size");
            }
        }
        if self.routes.path_cap == 0 {
            return bad("routes.path_cap must be at least 1");
        }
        if self.routes.delivery_trials == 0 || self.mc.trials == 0 {
            return bad("trial counts must be at least 1");
        }
        if self.mc.ns.contains(&0) {
            return bad("mc.ns entries must be at least 1");
        }
        if self.mc.fs.iter().any(|f| !(0.0..1.0).contains(f)) {
            return bad("mc.fs entries must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}
