//! Monte Carlo checks of the expected-transmission formulas.
//!
//! Trials are split into fixed-size chunks, each drawing from its own
//! random substream, and results are merged as integer sums and histograms,
//! so the outcome does not depend on thread scheduling.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng::{substream, Domain};

const CHUNK: u64 = 1 << 14;

/// Above this many expected rounds, trials are drawn directly from the
/// geometric distribution instead of simulated round by round.
pub const ROUND_SIMULATION_LIMIT: f64 = 64.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("trial count must be at least 1")]
    NoTrials,
    #[error("forwarder count must be at least 1")]
    NoForwarders,
    #[error("failure probability {0} outside [0, 1)")]
    Probability(f64),
    #[error("{given} failure probabilities for {n} forwarders")]
    LengthMismatch { n: usize, given: usize },
    #[error("hop {0} fails with certainty")]
    Undeliverable(usize),
    #[error("empty path")]
    EmptyPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Semantics {
    /// One broadcast per round; the round succeeds if any forwarder hears it.
    BroadcastGroupKey,
    /// One sealed unicast per forwarder per round; the round succeeds only if
    /// all of them arrive.
    PairwisePerLink,
}

impl Semantics {
    pub fn name(self) -> &'static str {
        match self {
            Semantics::BroadcastGroupKey => "broadcast_group_key",
            Semantics::PairwisePerLink => "pairwise_per_link",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FailureSpec {
    Uniform(f64),
    PerLink(Vec<f64>),
}

impl FailureSpec {
    fn expand(&self, n: usize) -> Result<Vec<f64>, SimError> {
        let fs = match self {
            FailureSpec::Uniform(f) => vec![*f; n],
            FailureSpec::PerLink(v) if v.len() == n => v.clone(),
            FailureSpec::PerLink(v) => return Err(SimError::LengthMismatch { n, given: v.len() }),
        };
        match fs.iter().find(|f| !(0.0..1.0).contains(*f)) {
            Some(&f) => Err(SimError::Probability(f)),
            None => Ok(fs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub n: usize,
    pub f: FailureSpec,
    pub semantics: Semantics,
    pub trials: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Rounds,
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trials: u64,
    pub mean_rounds: f64,
    pub stderr: f64,
    pub analytic: f64,
    pub engine: Engine,
    pub histogram: BTreeMap<u64, u64>,
}

impl TrialResult {
    /// |empirical - analytic| in units of the standard error.
    pub fn z_score(&self) -> f64 {
        let d = (self.mean_rounds - self.analytic).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.stderr
        }
    }
}

#[derive(Default)]
struct Tally {
    sum: u128,
    sum_sq: u128,
    histogram: BTreeMap<u64, u64>,
}

impl Tally {
    fn add(&mut self, rounds: u64) {
        self.sum += u128::from(rounds);
        self.sum_sq += u128::from(rounds) * u128::from(rounds);
        *self.histogram.entry(rounds).or_insert(0) += 1;
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        for (k, v) in other.histogram {
            *self.histogram.entry(k).or_insert(0) += v;
        }
        self
    }

    fn finish(self, trials: u64, analytic: f64, engine: Engine) -> TrialResult {
        let n = trials as f64;
        let mean = self.sum as f64 / n;
        let var = if trials > 1 {
            let t = u128::from(trials);
            let spread = self.sum_sq * t - self.sum * self.sum;
            spread as f64 / (n * (n - 1.0))
        } else {
            0.0
        };
        TrialResult {
            trials,
            mean_rounds: mean,
            stderr: (var / n).sqrt(),
            analytic,
            engine,
            histogram: self.histogram,
        }
    }
}

/// Number of rounds until the first success when each round succeeds with
/// probability `p`, by inverse transform.
fn geometric<R: Rng>(rng: &mut R, p: f64) -> u64 {
    if p >= 1.0 {
        return 1;
    }
    let u: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    1 + (u.ln() / (-p).ln_1p()).floor() as u64
}

fn round_succeeds<R: Rng>(rng: &mut R, fs: &[f64], semantics: Semantics) -> bool {
    // Every link is drawn each round so the stream position does not depend
    // on early outcomes.
    let mut any = false;
    let mut all = true;
    for &f in fs {
        let ok = rng.gen::<f64>() >= f;
        any |= ok;
        all &= ok;
    }
    match semantics {
        Semantics::BroadcastGroupKey => any,
        Semantics::PairwisePerLink => all,
    }
}

pub fn success_probability(fs: &[f64], semantics: Semantics) -> f64 {
    match semantics {
        Semantics::BroadcastGroupKey => 1.0 - fs.iter().product::<f64>(),
        Semantics::PairwisePerLink => fs.iter().map(|f| 1.0 - f).product(),
    }
}

/// Closed forms: `1/(1 - prod f)` for broadcast, `1/prod(1 - f)` for pairwise.
pub fn analytic_rounds(fs: &[f64], semantics: Semantics) -> f64 {
    1.0 / success_probability(fs, semantics)
}

fn stream_tag(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let d = h.finalize();
    // Upper 32 bits identify the experiment, lower 32 bits the chunk.
    u64::from(u32::from_le_bytes([d[0], d[1], d[2], d[3]])) << 32
}

fn run_chunks(seed: u64, domain: Domain, tag: u64, trials: u64, draw: impl Fn(&mut rand_chacha::ChaCha8Rng) -> u64 + Sync) -> Tally {
    let chunks = trials.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, domain, tag | c);
            let count = CHUNK.min(trials - c * CHUNK);
            let mut t = Tally::default();
            for _ in 0..count {
                t.add(draw(&mut rng));
            }
            t
        })
        .reduce(Tally::default, Tally::merge)
}

/// Like [`run_chunks`] but every trial gets its own substream, so trial `i`
/// sees the same draws whatever the previous trials consumed.
fn run_trials(seed: u64, domain: Domain, tag: u64, trials: u64, draw: impl Fn(&mut rand_chacha::ChaCha8Rng) -> u64 + Sync) -> Tally {
    let chunks = trials.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut t = Tally::default();
            for i in c * CHUNK..trials.min((c + 1) * CHUNK) {
                t.add(draw(&mut substream(seed, domain, tag.wrapping_add(i))));
            }
            t
        })
        .reduce(Tally::default, Tally::merge)
}

fn anypath_with_engine(cfg: &TrialConfig, engine: Option<Engine>) -> Result<TrialResult, SimError> {
    if cfg.trials == 0 {
        return Err(SimError::NoTrials);
    }
    if cfg.n == 0 {
        return Err(SimError::NoForwarders);
    }
    let fs = cfg.f.expand(cfg.n)?;
    let p = success_probability(&fs, cfg.semantics);
    let analytic = 1.0 / p;
    let engine = engine.unwrap_or(if analytic <= ROUND_SIMULATION_LIMIT {
        Engine::Rounds
    } else {
        Engine::Geometric
    });
    // The stream ignores the semantics: both readings of a cell see the same
    // link draws (common random numbers), so their comparison is pathwise.
    let bits: Vec<u8> = fs.iter().flat_map(|f| f.to_le_bytes()).collect();
    let semantics = cfg.semantics;
    let tally = match engine {
        Engine::Rounds => run_trials(cfg.seed, Domain::MonteCarlo, stream_tag(&[b"rounds", &bits]), cfg.trials, |rng| {
            let mut rounds = 1;
            while !round_succeeds(rng, &fs, semantics) {
                rounds += 1;
            }
            rounds
        }),
        Engine::Geometric => run_chunks(
            cfg.seed,
            Domain::MonteCarlo,
            stream_tag(&[b"geometric", &bits]),
            cfg.trials,
            |rng| geometric(rng, p),
        ),
    };
    Ok(tally.finish(cfg.trials, analytic, engine))
}

/// Rounds until a transmission to `n` forwarders succeeds under the chosen
/// semantics.
pub fn simulate_anypath_rounds(cfg: &TrialConfig) -> Result<TrialResult, SimError> {
    anypath_with_engine(cfg, None)
}

/// Forces a particular engine (used to cross-check the two).
pub fn simulate_anypath_rounds_with(cfg: &TrialConfig, engine: Engine) -> Result<TrialResult, SimError> {
    anypath_with_engine(cfg, Some(engine))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteDelivery {
    pub per_hop: Vec<TrialResult>,
    pub end_to_end: TrialResult,
}

/// End-to-end transmissions along a path whose hop `i` broadcasts to the
/// forwarders with failure probabilities `hops[i]`. Links with `f = 1` are
/// allowed as long as some forwarder of the hop can receive.
pub fn simulate_route_delivery(hops: &[Vec<f64>], trials: u64, seed: u64) -> Result<RouteDelivery, SimError> {
    if trials == 0 {
        return Err(SimError::NoTrials);
    }
    if hops.is_empty() {
        return Err(SimError::EmptyPath);
    }
    let mut ps = Vec::with_capacity(hops.len());
    for (i, fs) in hops.iter().enumerate() {
        if fs.is_empty() {
            return Err(SimError::NoForwarders);
        }
        if let Some(&f) = fs.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(SimError::Probability(f));
        }
        let p = success_probability(fs, Semantics::BroadcastGroupKey);
        if p <= 0.0 {
            return Err(SimError::Undeliverable(i));
        }
        ps.push(p);
    }
    let bits: Vec<u8> = hops.iter().flatten().flat_map(|f| f.to_le_bytes()).collect();
    let tag = stream_tag(&[b"route", &bits]);
    let h = hops.len();
    let chunks = trials.div_ceil(CHUNK);
    let tallies = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, Domain::RouteDelivery, tag | c);
            let count = CHUNK.min(trials - c * CHUNK);
            let mut per_hop: Vec<Tally> = (0..h).map(|_| Tally::default()).collect();
            let mut total = Tally::default();
            for _ in 0..count {
                let mut sum = 0;
                for (i, &p) in ps.iter().enumerate() {
                    let r = geometric(&mut rng, p);
                    per_hop[i].add(r);
                    sum += r;
                }
                total.add(sum);
            }
            (per_hop, total)
        })
        .reduce(
            || ((0..h).map(|_| Tally::default()).collect(), Tally::default()),
            |(a, ta), (b, tb)| (a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect(), ta.merge(tb)),
        );
    let per_hop: Vec<TrialResult> = tallies
        .0
        .into_iter()
        .zip(&ps)
        .map(|(t, p)| t.finish(trials, 1.0 / p, Engine::Geometric))
        .collect();
    let analytic = ps.iter().map(|p| 1.0 / p).sum();
    Ok(RouteDelivery {
        per_hop,
        end_to_end: tallies.1.finish(trials, analytic, Engine::Geometric),
    })
}

/// One line of the formula-validation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub semantics: Semantics,
    pub n: usize,
    pub f: f64,
    pub analytic: f64,
    pub empirical: f64,
    pub stderr: f64,
    pub trials: u64,
    pub seed: u64,
    pub engine: Engine,
}

impl GridRow {
    pub fn z_score(&self) -> f64 {
        let d = (self.empirical - self.analytic).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.stderr
        }
    }
}

pub fn formula_grid(ns: &[usize], fs: &[f64], trials: u64, seed: u64) -> Result<Vec<GridRow>, SimError> {
    let mut rows = Vec::new();
    for &n in ns {
        for &f in fs {
            for semantics in [Semantics::BroadcastGroupKey, Semantics::PairwisePerLink] {
                let r = simulate_anypath_rounds(&TrialConfig {
                    n,
                    f: FailureSpec::Uniform(f),
                    semantics,
                    trials,
                    seed,
                })?;
                rows.push(GridRow {
                    semantics,
                    n,
                    f,
                    analytic: r.analytic,
                    empirical: r.mean_rounds,
                    stderr: r.stderr,
                    trials,
                    seed,
                    engine: r.engine,
                });
            }
        }
    }
    Ok(rows)
}

pub const GRID_CSV_HEADER: &str = "semantics,n,f,analytic,empirical,stderr,trials,seed";

pub fn grid_to_csv(rows: &[GridRow]) -> String {
    let mut out = String::from(GRID_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{},{}\n",
            r.semantics.name(),
            r.n,
            r.f,
            r.analytic,
            r.empirical,
            r.stderr,
            r.trials,
            r.seed
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, f: f64, semantics: Semantics, trials: u64) -> TrialConfig {
        TrialConfig {
            n,
            f: FailureSpec::Uniform(f),
            semantics,
            trials,
            seed: 17,
        }
    }

    #[test]
    fn perfect_links_take_one_round() {
        for s in [Semantics::BroadcastGroupKey, Semantics::PairwisePerLink] {
            let r = simulate_anypath_rounds(&cfg(3, 0.0, s, 1000)).unwrap();
            assert_eq!(r.mean_rounds, 1.0);
            assert_eq!(r.histogram, BTreeMap::from([(1, 1000)]));
        }
    }

    #[test]
    fn single_link_means_two() {
        for s in [Semantics::BroadcastGroupKey, Semantics::PairwisePerLink] {
            let r = simulate_anypath_rounds(&cfg(1, 0.5, s, 200_000)).unwrap();
            assert_eq!(r.analytic, 2.0);
            assert!(r.z_score() < 4.0, "{r:?}");
            assert_eq!(r.histogram.values().sum::<u64>(), 200_000);
        }
    }

    #[test]
    fn reproducible() {
        let a = simulate_anypath_rounds(&cfg(3, 0.5, Semantics::BroadcastGroupKey, 50_000)).unwrap();
        let b = simulate_anypath_rounds(&cfg(3, 0.5, Semantics::BroadcastGroupKey, 50_000)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn semantics_share_draws() {
        // One forwarder: both readings are the same process on the same draws.
        let b = simulate_anypath_rounds(&cfg(1, 0.7, Semantics::BroadcastGroupKey, 20_000)).unwrap();
        let p = simulate_anypath_rounds(&cfg(1, 0.7, Semantics::PairwisePerLink, 20_000)).unwrap();
        assert_eq!(b.histogram, p.histogram);
        // More forwarders: broadcast is never slower, trial by trial.
        let b = simulate_anypath_rounds(&cfg(3, 0.6, Semantics::BroadcastGroupKey, 20_000)).unwrap();
        let p = simulate_anypath_rounds(&cfg(3, 0.6, Semantics::PairwisePerLink, 20_000)).unwrap();
        assert!(b.mean_rounds < p.mean_rounds);
        assert!(b.histogram.keys().max() <= p.histogram.keys().max());
    }

    #[test]
    fn engines_agree() {
        let c = cfg(2, 0.5, Semantics::PairwisePerLink, 200_000);
        let a = simulate_anypath_rounds_with(&c, Engine::Rounds).unwrap();
        let b = simulate_anypath_rounds_with(&c, Engine::Geometric).unwrap();
        let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        assert!((a.mean_rounds - b.mean_rounds).abs() < 4.0 * se);
    }

    #[test]
    fn errors() {
        assert_eq!(
            simulate_anypath_rounds(&cfg(1, 0.0, Semantics::PairwisePerLink, 0)),
            Err(SimError::NoTrials)
        );
        assert_eq!(
            simulate_anypath_rounds(&cfg(1, 1.0, Semantics::PairwisePerLink, 1)),
            Err(SimError::Probability(1.0))
        );
        let bad = TrialConfig {
            f: FailureSpec::PerLink(vec![0.1]),
            ..cfg(2, 0.0, Semantics::BroadcastGroupKey, 1)
        };
        assert_eq!(simulate_anypath_rounds(&bad), Err(SimError::LengthMismatch { n: 2, given: 1 }));
        assert_eq!(
            simulate_route_delivery(&[vec![1.0, 1.0]], 10, 1).unwrap_err(),
            SimError::Undeliverable(0)
        );
    }

    #[test]
    fn route_delivery() {
        let r = simulate_route_delivery(&[vec![0.0]], 100, 1).unwrap();
        assert_eq!(r.end_to_end.mean_rounds, 1.0);
        let r = simulate_route_delivery(&[vec![0.5], vec![0.5]], 100_000, 2).unwrap();
        assert_eq!(r.end_to_end.analytic, 4.0);
        assert!(r.end_to_end.z_score() < 4.0);
        let r = simulate_route_delivery(&[vec![0.5; 3]], 100_000, 3).unwrap();
        assert!((r.per_hop[0].analytic - 8.0 / 7.0).abs() < 1e-12);
        assert!(r.per_hop[0].z_score() < 4.0);
    }
}
