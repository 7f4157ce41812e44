//! Discrete-event simulation of the η-adaptive diffusion broadcast.
//!
//! A run has two phases. While the token is alive, the current virtual source
//! either passes the token to one of its selected neighbours or keeps it and
//! grows the infected ball by one level. Once the step reaches the configured
//! depth, the holder switches to flood-and-prune, which delivers to everyone.

mod sim;
mod trace;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use sim::{run_on_graph, run_simulation, SimOutcome, SimSummary, Simulation};
pub use trace::{EventKind, EventTrace, MessageId, ProtocolMessage, TraceRecord, Variant};

use crate::distmodel::{discretize, ModelConstants, NormalParams, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::forwarding::{self, eq2_baseline, ForwardingSchedule};
use crate::graph::{generate_k_growing, Graph};

/// Where the passing probabilities come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleSource {
    /// Exact solution for the estimated distance distribution; infeasible targets are an error.
    Ideal,
    /// Exact solution where feasible, adjusted targets otherwise.
    #[default]
    Smoothed,
    /// Original adaptive-diffusion probabilities for an `(eta + 1)`-regular tree.
    Eq2,
    /// Explicit `p_1, p_2, ...`; the last value repeats up to the depth.
    Fixed { p: Vec<f64> },
}

/// Simulation parameters. Every field has a default, so a JSON document only
/// needs the values it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub k: usize,
    pub graph_seed: u64,
    /// Load the graph from an edge list instead of generating it.
    pub edge_list: Option<PathBuf>,
    pub eta: usize,
    /// Last diffusion step; `None` picks the smallest depth whose tree bound reaches `anonymity_target`.
    pub depth: Option<usize>,
    /// Defaults to `n / 10`.
    pub anonymity_target: Option<f64>,
    /// Originating node; `None` draws one uniformly.
    pub origin: Option<usize>,
    /// Median one-way latency in seconds.
    pub latency_median: f64,
    /// Log-normal shape of the latency distribution.
    pub latency_shape: f64,
    /// Timeout in units of the estimated latency; `None` means `4 (depth + 2)`.
    pub timeout_multiplier: Option<f64>,
    pub schedule: ScheduleSource,
    /// Condition the holder's passing probability on the step it received the token.
    pub refine_holder: bool,
    pub mu_constants: ModelConstants,
    pub sigma_constants: ModelConstants,
    pub epsilon: f64,
    pub seed: u64,
    /// Nodes that drop SPREAD and TOKEN but still relay FLOOD.
    pub silent_nodes: Vec<usize>,
    pub payload: String,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 1000,
            k: 6,
            graph_seed: 1,
            edge_list: None,
            eta: 3,
            depth: None,
            anonymity_target: None,
            origin: None,
            latency_median: 0.05,
            latency_shape: 0.25,
            timeout_multiplier: None,
            schedule: ScheduleSource::default(),
            refine_holder: false,
            mu_constants: ModelConstants::published_mu(),
            sigma_constants: ModelConstants::published_sigma(),
            epsilon: DEFAULT_EPSILON,
            seed: 0,
            silent_nodes: Vec::new(),
            payload: "hello".into(),
        }
    }
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eta < 1 {
            return Err(Error::param("eta must be at least 1"));
        }
        if self.depth == Some(0) {
            return Err(Error::param("depth must be at least 1"));
        }
        if let Some(m) = self.timeout_multiplier {
            if !(m > 1.0) {
                return Err(Error::param(format!("timeout multiplier must exceed 1, got {m}")));
            }
        }
        if !(self.latency_median > 0.0 && self.latency_median.is_finite()) {
            return Err(Error::param("latency median must be positive"));
        }
        if !(self.latency_shape >= 0.0 && self.latency_shape.is_finite()) {
            return Err(Error::param("latency shape must be non-negative"));
        }
        if self.edge_list.is_none() && (self.n < 2 || self.k < 1) {
            return Err(Error::param(format!(
                "need n >= 2 and k >= 1, got n = {}, k = {}",
                self.n, self.k
            )));
        }
        if let ScheduleSource::Fixed { p } = &self.schedule {
            if p.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::param("fixed probabilities must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// The depth actually used for a graph of `n` nodes.
    pub fn resolved_depth(&self, n: usize) -> usize {
        self.depth.unwrap_or_else(|| {
            default_depth(self.eta, self.anonymity_target.unwrap_or(n as f64 / 10.0))
        })
    }

    pub fn resolved_timeout(&self, depth: usize) -> f64 {
        self.timeout_multiplier.unwrap_or(4.0 * (depth as f64 + 2.0))
    }

    /// The configured graph, generated or loaded.
    pub fn build_graph(&self) -> Result<Graph> {
        match &self.edge_list {
            Some(path) => {
                let file = std::fs::File::open(path)?;
                Graph::read_edge_list(std::io::BufReader::new(file))
            }
            None => generate_k_growing(self.n, self.k, self.graph_seed),
        }
    }
}

/// Nodes holding the message after `depth` steps with no token movement on a
/// tree where every node has at least `eta + 1` neighbours:
/// `1 + (eta + 1) sum_{i=0}^{depth-2} eta^i`.
pub fn tree_bound(eta: usize, depth: usize) -> u64 {
    let eta = eta as u64;
    let mut level = 1u64;
    let mut sum = 0u64;
    for _ in 0..depth.saturating_sub(1) {
        sum = sum.saturating_add(level);
        level = level.saturating_mul(eta);
    }
    1u64.saturating_add((eta + 1).saturating_mul(sum))
}

/// Smallest depth whose tree bound reaches `target`.
pub fn default_depth(eta: usize, target: f64) -> usize {
    (1..=256)
        .find(|&d| tree_bound(eta, d) as f64 >= target)
        .unwrap_or(256)
}

/// How a holder turns its step into a passing probability.
#[derive(Debug, Clone)]
pub enum PassRule {
    Schedule {
        schedule: ForwardingSchedule,
        refine_holder: bool,
    },
    Eq2 {
        tree_degree: usize,
    },
}

impl PassRule {
    /// `step` is the holder's current step, `received` the step it got the
    /// token at, `hops` the number of passes behind it.
    pub fn probability(&self, step: usize, received: usize, hops: usize) -> f64 {
        match self {
            PassRule::Schedule { schedule, refine_holder } => {
                let refined = refine_holder.then(|| schedule.holder_probability(received, step)).flatten();
                refined.or_else(|| schedule.probability_at(step)).unwrap_or(0.0)
            }
            PassRule::Eq2 { tree_degree } => {
                if hops == 0 {
                    return 1.0;
                }
                let h = hops.min(step.div_ceil(2)).max(1);
                eq2_baseline(*tree_degree, step, h).unwrap_or(0.0)
            }
        }
    }

    /// Builds the rule for a graph of `n` nodes with `k` links per new node.
    pub fn for_config(cfg: &SimConfig, n: usize, k: usize) -> Result<Self> {
        let depth = cfg.resolved_depth(n);
        let schedule = match &cfg.schedule {
            ScheduleSource::Eq2 => {
                return Ok(PassRule::Eq2 {
                    tree_degree: (cfg.eta + 1).max(2),
                })
            }
            ScheduleSource::Fixed { p } => {
                let steps = depth.saturating_sub(1);
                let last = p.last().copied().unwrap_or(0.0);
                let combined = (0..steps).map(|i| p.get(i).copied().unwrap_or(last)).collect();
                ForwardingSchedule::from_combined(combined)?
            }
            source @ (ScheduleSource::Ideal | ScheduleSource::Smoothed) => {
                if depth < 2 {
                    ForwardingSchedule::from_combined(Vec::new())?
                } else {
                    let params = NormalParams::estimate(n, k, &cfg.mu_constants, &cfg.sigma_constants)?;
                    let dist = discretize(params, n, k, cfg.epsilon)?;
                    let mut f = dist.mass().to_vec();
                    if f.len() < depth {
                        f.resize(depth, 0.0);
                    }
                    forwarding::schedule(&f, depth, *source == ScheduleSource::Smoothed)?
                }
            }
        };
        Ok(PassRule::Schedule {
            schedule,
            refine_holder: cfg.refine_holder,
        })
    }

    pub fn schedule(&self) -> Option<&ForwardingSchedule> {
        match self {
            PassRule::Schedule { schedule, .. } => Some(schedule),
            PassRule::Eq2 { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_bound_values() {
        assert_eq!(tree_bound(5, 4), 187);
        assert_eq!(tree_bound(3, 1), 1);
        assert_eq!(tree_bound(3, 2), 5);
        assert_eq!(tree_bound(1, 5), 9);
    }

    #[test]
    fn default_depth_reaches_target() {
        assert_eq!(default_depth(3, 100.0), 5);
        assert_eq!(default_depth(3, 1.0), 1);
        assert!(tree_bound(3, default_depth(3, 100.0) - 1) < 100);
    }

    #[test]
    fn config_json_defaults_and_validation() {
        let cfg = SimConfig::from_json(r#"{"n": 50, "k": 3, "schedule": {"kind": "fixed", "p": [0.5]}}"#).unwrap();
        assert_eq!(cfg.eta, 3);
        assert_eq!(cfg.schedule, ScheduleSource::Fixed { p: vec![0.5] });
        assert!(SimConfig::from_json(r#"{"eta": 0}"#).is_err());
        assert!(SimConfig::from_json(r#"{"timeout_multiplier": 1.0}"#).is_err());
        assert!(SimConfig::from_json(r#"{"bogus": 1}"#).is_err());
        let echo = serde_json::to_string(&SimConfig::default()).unwrap();
        assert_eq!(SimConfig::from_json(&echo).unwrap(), SimConfig::default());
    }

    #[test]
    fn estimated_schedule_covers_the_depth() {
        let cfg = SimConfig {
            depth: Some(6),
            ..SimConfig::default()
        };
        let rule = PassRule::for_config(&cfg, 2000, 6).unwrap();
        let s = rule.schedule().unwrap();
        assert_eq!(s.final_step, 6);
        assert!(s.combined.iter().all(|p| (0.0..=1.0).contains(p)));
    }
}
