//! Pipeline orchestration and report emission.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, ScenarioConfig};
use crate::keyproto::{adversary_closure, establish_group_keys, KeyEstablishment, ProtocolError};
use crate::netmodel::{ModelError, NetworkGraph, NodeId};
use crate::routing::{
    collect_topology_at_sink, compute_eak_to_sink, construct_query_routes, dispatch_nhlists, forward_query_and_reply, Dispatch, Mode,
    RoutingError, RoutingState, TopologyReport, EPSILON,
};
use crate::sim::{self, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Generate,
    Eka,
    Keys,
    Routes,
    Mc,
    Adversary,
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Eka => "eka",
            Command::Keys => "keys",
            Command::Routes => "routes",
            Command::Mc => "mc",
            Command::Adversary => "adversary",
            Command::All => "all",
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("routing modes disagree at node {node}: {detail}")]
    ModeMismatch { node: NodeId, detail: String },
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl ScenarioError {
    pub fn kind(&self) -> &'static str {
        match self {
            ScenarioError::Config(_) => "config",
            ScenarioError::Model(_) => "model",
            ScenarioError::Routing(RoutingError::Unreachable { .. }) => "unreachable",
            ScenarioError::Routing(RoutingError::NonConvergence { .. }) => "non_convergence",
            ScenarioError::Routing(RoutingError::UnknownNode(_)) => "unknown_node",
            ScenarioError::Routing(_) => "routing",
            ScenarioError::Protocol(_) => "protocol",
            ScenarioError::Sim(_) => "simulation",
            ScenarioError::ModeMismatch { .. } => "mode_mismatch",
            ScenarioError::Io { .. } => "io",
        }
    }

    /// Process exit status. 2 is left to argument parsing.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "config" | "model" | "unknown_node" => 3,
            "unreachable" => 4,
            "non_convergence" => 5,
            "protocol" => 6,
            "io" => 7,
            "mode_mismatch" => 8,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        })
    }
}

/// Per-run overrides coming from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<std::path::PathBuf>,
    pub destination: Option<NodeId>,
    pub trials: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ScenarioConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.output_dir {
            cfg.output_dir = o.clone();
        }
        if let Some(d) = self.destination {
            cfg.routes.destinations = Some(vec![d]);
        }
        if let Some(t) = self.trials {
            cfg.mc.trials = t;
        }
    }
}

/// Emitted files by name, plus a short summary for the terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub files: BTreeMap<String, String>,
    pub summary: Value,
}

impl ReportBundle {
    pub fn manifest(&self) -> String {
        let files: BTreeMap<&str, String> = self
            .files
            .iter()
            .filter(|(n, _)| n.as_str() != "manifest.json")
            .map(|(n, c)| (n.as_str(), hex::encode(Sha256::digest(c.as_bytes()))))
            .collect();
        pretty(&json!({ "files": files }))
    }

    pub fn write_to(&self, dir: &Path) -> Result<(), ScenarioError> {
        let io = |path: &Path, source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        for (name, content) in &self.files {
            let p = dir.join(name);
            std::fs::write(&p, content).map_err(|e| io(&p, e))?;
        }
        Ok(())
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report values serialise");
    s.push('\n');
    s
}

struct Routing {
    state: RoutingState,
    dispatch: Dispatch,
    topology: TopologyReport,
    cross_check: Option<f64>,
}

fn run_routing(cfg: &ScenarioConfig, graph: &NetworkGraph) -> Result<Routing, ScenarioError> {
    let mut state = compute_eak_to_sink(graph, cfg.routing.mode)?;
    let mut cross_check = None;
    if cfg.routing.cross_check {
        let other = match cfg.routing.mode {
            Mode::GreedyFinalize => Mode::IterativeRelax,
            Mode::IterativeRelax => Mode::GreedyFinalize,
        };
        let alt = compute_eak_to_sink(graph, other)?;
        let mut worst: f64 = 0.0;
        for (n, r) in &state.eak {
            let d = (r.eak - alt.eak[n].eak).abs();
            if d > EPSILON {
                return Err(ScenarioError::ModeMismatch {
                    node: *n,
                    detail: format!("EAK {} vs {}", r.eak, alt.eak[n].eak),
                });
            }
            if !state.nhlists[n].same_members(&alt.nhlists[n]) {
                return Err(ScenarioError::ModeMismatch {
                    node: *n,
                    detail: "forwarder lists differ".into(),
                });
            }
            worst = worst.max(d);
        }
        cross_check = Some(worst);
    }
    let dispatch = dispatch_nhlists(&mut state);
    let topology = collect_topology_at_sink(&state, graph);
    Ok(Routing {
        state,
        dispatch,
        topology,
        cross_check,
    })
}

fn eak_json(r: &Routing) -> String {
    let s = &r.state;
    let nodes: Vec<Value> = s
        .eak
        .values()
        .map(|rec| {
            json!({
                "node": rec.node,
                "eak": rec.eak,
                "last_hop": rec.last_hop,
                "relay": rec.relay,
                "nhlist": s.nhlists[&rec.node].entries,
                "selectors": s.selectors.get(&rec.node).cloned().unwrap_or_default(),
            })
        })
        .collect();
    pretty(&json!({
        "mode": s.mode,
        "rounds": s.rounds,
        "cross_check_max_diff": r.cross_check,
        "admission_stats": s.admission_stats,
        "dispatch_messages": r.dispatch.message_count(),
        "unreachable": s.unreachable(),
        "nodes": nodes,
    }))
}

fn metrics_csv(graph: &NetworkGraph, r: &Routing) -> String {
    let s = &r.state;
    let rows: [(&str, String); 9] = [
        ("nodes", graph.len().to_string()),
        ("links", graph.links().len().to_string()),
        ("rounds", s.rounds.to_string()),
        ("dispatch_messages", r.dispatch.message_count().to_string()),
        ("topology_messages_unaggregated", r.topology.unaggregated_messages.to_string()),
        ("topology_messages_aggregated", r.topology.aggregated_messages.to_string()),
        ("unreachable_nodes", s.unreachable().len().to_string()),
        ("admissions", s.admission_stats.admissions.to_string()),
        ("admission_violations", s.admission_stats.violations.to_string()),
    ];
    let mut out = String::from("metric,value\n");
    for (k, v) in rows {
        let _ = writeln!(out, "{k},{v}");
    }
    out
}

fn transcripts_json(keys: &KeyEstablishment) -> String {
    let ts = keys.transcripts();
    let summaries: Vec<_> = ts.iter().map(|t| t.summary()).collect();
    pretty(&json!({
        "groups": ts.len(),
        "established": ts.iter().filter(|t| t.is_established()).count(),
        "members_agree": ts.iter().all(|t| t.members_agree()),
        "transcripts": summaries,
    }))
}

fn routes_json(
    cfg: &ScenarioConfig,
    graph: &NetworkGraph,
    r: &Routing,
    keys: &mut KeyEstablishment,
) -> Result<(String, usize), ScenarioError> {
    let table = &r.topology.table;
    let explicit = cfg.routes.destinations.is_some();
    let destinations: Vec<NodeId> = match &cfg.routes.destinations {
        Some(d) => d.clone(),
        None => table.records.keys().copied().filter(|&n| n != table.sink).collect(),
    };
    let mut out = Vec::new();
    for d in destinations {
        if graph.node(d).is_none() {
            return Err(RoutingError::UnknownNode(d).into());
        }
        let set = match construct_query_routes(table, d, cfg.routes.policy, cfg.routes.path_cap) {
            Ok(s) => s,
            Err(e) if explicit => return Err(e.into()),
            Err(_) => continue,
        };
        let (trace, delivery) = match &set.chosen {
            Some(path) => {
                let trace = forward_query_and_reply(keys, &r.state, path, None)?;
                let hops: Vec<Vec<f64>> = trace
                    .reply_path
                    .iter()
                    .filter(|&&n| n != table.sink)
                    .map(|n| r.state.nhlists[n].entries.iter().map(|e| e.f).collect())
                    .collect();
                let seed = cfg.seed ^ u64::from(d).rotate_left(32);
                let sim = sim::simulate_route_delivery(&hops, cfg.routes.delivery_trials, seed)?;
                let delivery = json!({
                    "hops": hops.len(),
                    "analytic_transmissions": sim.end_to_end.analytic,
                    "mean_transmissions": sim.end_to_end.mean_rounds,
                    "stderr": sim.end_to_end.stderr,
                    "per_hop_analytic": sim.per_hop.iter().map(|h| h.analytic).collect::<Vec<_>>(),
                    "per_hop_mean": sim.per_hop.iter().map(|h| h.mean_rounds).collect::<Vec<_>>(),
                });
                (Some(trace), Some(delivery))
            }
            None => (None, None),
        };
        out.push(json!({
            "destination": d,
            "route_set": set,
            "trace": trace,
            "delivery": delivery,
        }));
    }
    let n = out.len();
    Ok((
        pretty(&json!({
            "policy": cfg.routes.policy,
            "path_cap": cfg.routes.path_cap,
            "delivery_trials": cfg.routes.delivery_trials,
            "unreachable": r.topology.unreachable,
            "routes": out,
        })),
        n,
    ))
}

fn mc_outputs(cfg: &ScenarioConfig) -> Result<(String, String, bool), ScenarioError> {
    let rows = sim::formula_grid(&cfg.mc.ns, &cfg.mc.fs, cfg.mc.trials, cfg.seed)?;
    let csv = sim::grid_to_csv(&rows);
    let mut ordered = true;
    let cells: Vec<Value> = rows
        .chunks(2)
        .map(|pair| {
            let (b, p) = (&pair[0], &pair[1]);
            let ok = b.analytic <= p.analytic && b.empirical <= p.empirical;
            ordered &= ok;
            json!({
                "n": b.n,
                "f": b.f,
                "broadcast": { "analytic": b.analytic, "empirical": b.empirical, "stderr": b.stderr, "z": b.z_score(), "engine": b.engine },
                "pairwise": { "analytic": p.analytic, "empirical": p.empirical, "stderr": p.stderr, "z": p.z_score(), "engine": p.engine },
                "broadcast_not_worse": ok,
            })
        })
        .collect();
    let json = pretty(&json!({
        "trials": cfg.mc.trials,
        "seed": cfg.seed,
        "cells": cells,
    }));
    Ok((csv, json, ordered))
}

fn adversary_json(cfg: &ScenarioConfig, graph: &NetworkGraph, keys: &KeyEstablishment) -> String {
    let total = keys.group_keys().count();
    let sets: Vec<Value> = cfg
        .adversary
        .compromised_sets
        .iter()
        .map(|set| {
            let set: BTreeSet<NodeId> = set.iter().copied().collect();
            let c = adversary_closure(graph, keys.transcripts(), &set);
            let derivable: Vec<String> = c.derivable_keys().iter().map(ToString::to_string).collect();
            json!({
                "compromised": set,
                "opened_envelopes": c.opened().len(),
                "derivable_count": derivable.len(),
                "derivable": derivable,
            })
        })
        .collect();
    pretty(&json!({ "group_keys": total, "sets": sets }))
}

/// Runs the pipeline up to the stage `cmd` needs and collects its outputs.
pub fn run_scenario(cfg: &ScenarioConfig, cmd: Command) -> Result<ReportBundle, ScenarioError> {
    cfg.validate()?;
    let mut files = BTreeMap::new();
    let mut summary = serde_json::Map::new();
    summary.insert("command".into(), json!(cmd.name()));
    summary.insert("seed".into(), json!(cfg.seed));
    files.insert("resolved_config.json".to_string(), format!("{}\n", cfg.to_json()));

    if cmd == Command::Mc || cmd == Command::All {
        let (csv, json, ordered) = mc_outputs(cfg)?;
        files.insert("mc.csv".into(), csv);
        files.insert("mc.json".into(), json);
        summary.insert("mc_broadcast_not_worse".into(), json!(ordered));
    }

    if cmd != Command::Mc {
        let graph = cfg.topology.build(cfg.seed)?;
        files.insert("graph.json".into(), format!("{}\n", graph.to_canonical_json()));
        files.insert("graph.dot".into(), graph.to_dot());
        summary.insert("graph_digest".into(), json!(graph.digest()));
        summary.insert("nodes".into(), json!(graph.len()));
        summary.insert("links".into(), json!(graph.links().len()));

        if cmd != Command::Generate {
            let routing = run_routing(cfg, &graph)?;
            files.insert("eak.json".into(), eak_json(&routing));
            files.insert("metrics.csv".into(), metrics_csv(&graph, &routing));
            summary.insert("rounds".into(), json!(routing.state.rounds));
            summary.insert("unreachable".into(), json!(routing.state.unreachable()));
            let eaks: BTreeMap<NodeId, f64> = routing.state.eak.iter().map(|(n, r)| (*n, r.eak)).collect();
            summary.insert("eak".into(), json!(eaks));

            if matches!(cmd, Command::Keys | Command::Routes | Command::Adversary | Command::All) {
                let mut keys = establish_group_keys(&graph, &routing.state.relay_sets(), cfg.seed)?;
                files.insert("transcripts.json".into(), transcripts_json(&keys));
                summary.insert("group_keys".into(), json!(keys.group_keys().count()));

                if matches!(cmd, Command::Adversary | Command::All) {
                    files.insert("adversary.json".into(), adversary_json(cfg, &graph, &keys));
                }
                if matches!(cmd, Command::Routes | Command::All) {
                    let (routes, n) = routes_json(cfg, &graph, &routing, &mut keys)?;
                    files.insert("routes.json".into(), routes);
                    summary.insert("routed_destinations".into(), json!(n));
                }
            }
        }
    }

    let mut bundle = ReportBundle {
        files,
        summary: Value::Object(summary),
    };
    let manifest = bundle.manifest();
    bundle.files.insert("manifest.json".into(), manifest);
    Ok(bundle)
}
