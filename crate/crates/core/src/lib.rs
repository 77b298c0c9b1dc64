//! Secure multipath routing for sensor networks with random key
//! pre-distribution.
//!
//! * [`netmodel`]: deployments, key rings and the secure-link graph.
//! * [`eak`]: the Expected Key Average metric and forwarder selection.
//! * [`keyproto`]: forward/backward group-key establishment and an
//!   adversary derivation closure.
//! * [`routing`]: the sink-rooted fixpoint, topology collection, route
//!   construction and sealed delivery.
//! * [`sim`]: Monte Carlo validation of the transmission-count formulas.
//! * [`scenario`]: config-driven pipeline used by the `eakroute` binary.

pub mod config;
pub mod eak;
pub mod fixtures;
pub mod keyproto;
pub mod netmodel;
pub mod rng;
pub mod routing;
pub mod scenario;
pub mod sim;
