use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::Serialize;

use super::trace::{EventKind, EventTrace, MessageId, ProtocolMessage, TraceRecord};
use super::{PassRule, SimConfig};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeSet};

#[derive(Debug, Clone, Copy)]
enum Action {
    Deliver { to: usize, from: usize, msg: ProtocolMessage, sent: f64 },
    /// The holder decides between passing and keeping at its current step.
    Decide { node: usize, gen: u64 },
    /// The holder's artificial wait is over; it grows the ball by one level.
    Spread { node: usize, gen: u64 },
    FloodStart { node: usize, gen: u64 },
    Timeout { node: usize, gen: u64 },
}

struct Entry {
    time: f64,
    seq: u64,
    action: Action,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // Reversed so the max-heap pops the earliest (time, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Copy)]
struct Holder {
    step: usize,
    received: usize,
    prev: Option<usize>,
}

#[derive(Debug, Clone)]
struct Pending {
    step: usize,
    prev: Option<usize>,
    tried: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
struct NodeState {
    has_message: bool,
    gamma: Option<Vec<usize>>,
    predecessor: Option<usize>,
    flooded: bool,
    /// Highest step at which this node has held the token.
    token_step: usize,
    hops: usize,
    holder: Option<Holder>,
    pending: Option<Pending>,
    /// Bumped whenever scheduled holder or timer events become stale.
    gen: u64,
    observed_latency: Vec<f64>,
}

/// Result of one run.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub message: MessageId,
    pub n: usize,
    pub source: usize,
    pub depth: usize,
    pub trace: EventTrace,
    /// Nodes holding the message at the end.
    pub infected: NodeSet,
    /// The source plus every node that received SPREAD or TOKEN.
    pub diffusion_reach: NodeSet,
    /// Token holders in order, starting with the source.
    pub token_path: Vec<usize>,
    /// Token sends, retransmissions included.
    pub passes: usize,
    pub flood_start: Option<f64>,
    pub end_time: f64,
    /// False when the run was stopped early.
    pub completed: bool,
    pub link_latencies: Vec<f64>,
    pub artificial_waits: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimSummary {
    pub config: SimConfig,
    pub seed: u64,
    pub n: usize,
    pub message: MessageId,
    pub source: usize,
    pub depth: usize,
    pub infected: usize,
    pub diffusion_reach: usize,
    pub token_path: Vec<usize>,
    pub passes: usize,
    pub flood_start: Option<f64>,
    pub end_time: f64,
    pub completed: bool,
    pub events: usize,
    pub sends: usize,
    pub timeouts: usize,
    pub retransmits: usize,
}

impl SimOutcome {
    pub fn summary(&self, config: &SimConfig) -> SimSummary {
        SimSummary {
            config: config.clone(),
            seed: config.seed,
            n: self.n,
            message: self.message,
            source: self.source,
            depth: self.depth,
            infected: self.infected.len(),
            diffusion_reach: self.diffusion_reach.len(),
            token_path: self.token_path.clone(),
            passes: self.passes,
            flood_start: self.flood_start,
            end_time: self.end_time,
            completed: self.completed,
            events: self.trace.len(),
            sends: self.trace.count(EventKind::Send),
            timeouts: self.trace.count(EventKind::Timeout),
            retransmits: self.trace.count(EventKind::Retransmit),
        }
    }
}

/// Single-message simulator over a fixed graph.
pub struct Simulation<'g> {
    g: &'g Graph,
    rule: PassRule,
    eta: usize,
    depth: usize,
    timeout: f64,
    latency_median: f64,
    latency: LogNormal<f64>,
    latency_shape: f64,
    rng: ChaCha8Rng,
    queue: BinaryHeap<Entry>,
    seq: u64,
    now: f64,
    nodes: Vec<NodeState>,
    silent: Vec<bool>,
    id: MessageId,
    source: usize,
    trace: Vec<TraceRecord>,
    reach: NodeSet,
    token_path: Vec<usize>,
    passes: usize,
    flood_start: Option<f64>,
    link_latencies: Vec<f64>,
    artificial_waits: Vec<f64>,
    started: bool,
}

fn lognormal(median: f64, shape: f64) -> Result<LogNormal<f64>> {
    LogNormal::new(median.ln(), shape).map_err(|e| Error::param(format!("latency model: {e}")))
}

impl<'g> Simulation<'g> {
    pub fn new(g: &'g Graph, cfg: &SimConfig, rule: PassRule) -> Result<Self> {
        cfg.validate()?;
        let n = g.n();
        if n < 2 {
            return Err(Error::param("the graph needs at least two nodes"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let source = match cfg.origin {
            Some(v) if v < n => v,
            Some(v) => return Err(Error::param(format!("origin {v} out of range for n = {n}"))),
            None => rng.random_range(0..n),
        };
        let mut silent = vec![false; n];
        for &v in &cfg.silent_nodes {
            *silent
                .get_mut(v)
                .ok_or_else(|| Error::param(format!("silent node {v} out of range")))? = true;
        }
        let depth = cfg.resolved_depth(n);
        Ok(Simulation {
            g,
            rule,
            eta: cfg.eta,
            depth,
            timeout: cfg.resolved_timeout(depth),
            latency_median: cfg.latency_median,
            latency: lognormal(cfg.latency_median, cfg.latency_shape)?,
            latency_shape: cfg.latency_shape,
            rng,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            nodes: vec![NodeState::default(); n],
            silent,
            id: MessageId::of(cfg.payload.as_bytes()),
            source,
            trace: Vec::new(),
            reach: NodeSet::new(),
            token_path: Vec::new(),
            passes: 0,
            flood_start: None,
            link_latencies: Vec::new(),
            artificial_waits: Vec::new(),
            started: false,
        })
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Runs until no events remain.
    pub fn run(self) -> SimOutcome {
        self.run_until(|_| false)
    }

    /// Runs until `stop` accepts a trace record or no events remain.
    pub fn run_until(mut self, mut stop: impl FnMut(&TraceRecord) -> bool) -> SimOutcome {
        if !self.started {
            self.start();
        }
        let mut halted = self.trace.iter().any(&mut stop);
        let mut checked = self.trace.len();
        while !halted {
            let Some(entry) = self.queue.pop() else { break };
            self.now = entry.time;
            self.dispatch(entry.action);
            halted = self.trace[checked..].iter().any(&mut stop);
            checked = self.trace.len();
        }
        self.finish(!halted)
    }

    fn finish(self, completed: bool) -> SimOutcome {
        let infected = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, s)| s.has_message)
            .map(|(v, _)| v)
            .collect();
        SimOutcome {
            message: self.id,
            source: self.source,
            depth: self.depth,
            trace: EventTrace { records: self.trace },
            infected,
            diffusion_reach: self.reach,
            token_path: self.token_path,
            passes: self.passes,
            flood_start: self.flood_start,
            end_time: self.now,
            completed,
            link_latencies: self.link_latencies,
            artificial_waits: self.artificial_waits,
            n: self.nodes.len(),
        }
    }

    fn push(&mut self, delay: f64, action: Action) {
        self.seq += 1;
        self.queue.push(Entry {
            time: self.now + delay,
            seq: self.seq,
            action,
        });
    }

    fn log(&mut self, actor: usize, kind: EventKind, message: ProtocolMessage, peer: Option<usize>) {
        self.trace.push(TraceRecord {
            time: self.now,
            actor,
            kind,
            message,
            peer,
        });
    }

    fn send(&mut self, from: usize, to: usize, msg: ProtocolMessage) {
        self.log(from, EventKind::Send, msg, Some(to));
        let delay = self.latency.sample(&mut self.rng);
        self.link_latencies.push(delay);
        self.push(delay, Action::Deliver { to, from, msg, sent: self.now });
    }

    /// Median of the latencies this node has observed, or the configured median.
    fn latency_estimate(&self, node: usize) -> f64 {
        let obs = &self.nodes[node].observed_latency;
        if obs.is_empty() {
            return self.latency_median;
        }
        let mut sorted = obs.clone();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len() / 2;
        if sorted.len() % 2 == 1 {
            sorted[m]
        } else {
            0.5 * (sorted[m - 1] + sorted[m])
        }
    }

    /// One draw from the latency family around the node's own estimate.
    fn artificial_wait(&mut self, node: usize) -> f64 {
        let median = self.latency_estimate(node);
        let wait = lognormal(median, self.latency_shape)
            .map(|d| d.sample(&mut self.rng))
            .unwrap_or(median);
        self.artificial_waits.push(wait);
        wait
    }

    fn select_gamma(&mut self, node: usize, exclude: Option<usize>) {
        let pool: Vec<usize> = self
            .g
            .neighbors(node)
            .iter()
            .copied()
            .filter(|&v| Some(v) != exclude)
            .collect();
        let take = self.eta.min(pool.len());
        let gamma = pool.choose_multiple(&mut self.rng, take).copied().collect();
        self.nodes[node].gamma = Some(gamma);
    }

    /// Selected neighbours plus the predecessor.
    fn gamma_vs(&self, node: usize) -> Vec<usize> {
        let s = &self.nodes[node];
        let mut out = s.gamma.clone().unwrap_or_default();
        if let Some(p) = s.predecessor {
            if !out.contains(&p) {
                out.push(p);
            }
        }
        out
    }

    fn bump(&mut self, node: usize) -> u64 {
        self.nodes[node].gen += 1;
        self.nodes[node].gen
    }

    fn start(&mut self) {
        self.started = true;
        let s = self.source;
        self.nodes[s].has_message = true;
        self.reach.insert(s);
        self.token_path.push(s);
        self.nodes[s].token_step = 1;
        if self.depth <= 1 {
            self.begin_flood(s);
            return;
        }
        let Some(&u) = self.g.neighbors(s).choose(&mut self.rng) else {
            self.log(s, EventKind::Degenerate, ProtocolMessage::Flood(self.id), None);
            self.begin_flood(s);
            return;
        };
        self.nodes[s].predecessor = Some(u);
        self.select_gamma(s, Some(u));
        self.nodes[s].pending = Some(Pending { step: 1, prev: None, tried: vec![u] });
        self.pass_token(s, u, 1);
    }

    fn pass_token(&mut self, node: usize, to: usize, step: usize) {
        let msg = ProtocolMessage::Token { sender: node, t: step, id: self.id };
        self.log(node, EventKind::TokenPass, msg, Some(to));
        self.passes += 1;
        self.send(node, to, msg);
        self.arm_timer(node);
    }

    fn arm_timer(&mut self, node: usize) {
        let gen = self.bump(node);
        let delay = self.timeout * self.latency_estimate(node);
        self.push(delay, Action::Timeout { node, gen });
    }

    fn dispatch(&mut self, action: Action) {
        match action {
            Action::Deliver { to, from, msg, sent } => self.receive(to, from, msg, sent),
            Action::Decide { node, gen } => self.decide(node, gen),
            Action::Spread { node, gen } => self.spread(node, gen),
            Action::FloodStart { node, gen } => {
                if self.nodes[node].gen == gen && self.nodes[node].holder.is_some() {
                    self.begin_flood(node);
                }
            }
            Action::Timeout { node, gen } => self.timeout(node, gen),
        }
    }

    fn receive(&mut self, to: usize, from: usize, msg: ProtocolMessage, sent: f64) {
        self.log(to, EventKind::Receive, msg, Some(from));
        self.nodes[to].observed_latency.push(self.now - sent);
        self.nodes[to].has_message = true;
        match msg {
            ProtocolMessage::Flood(_) => self.receive_flood(to, from),
            ProtocolMessage::Spread(_) => {
                self.reach.insert(to);
                if self.silent[to] {
                    return;
                }
                self.extend_timer(to);
                self.handle_spread(to, from);
            }
            ProtocolMessage::Token { sender, t, .. } => {
                self.reach.insert(to);
                if self.silent[to] {
                    return;
                }
                self.extend_timer(to);
                self.handle_token(to, sender, t);
            }
        }
    }

    fn extend_timer(&mut self, node: usize) {
        if self.nodes[node].pending.is_some() && !self.nodes[node].flooded {
            self.arm_timer(node);
        }
    }

    fn handle_spread(&mut self, node: usize, from: usize) {
        match self.nodes[node].predecessor {
            None => {
                self.nodes[node].predecessor = Some(from);
                self.select_gamma(node, Some(from));
            }
            Some(p) if p == from => {
                let msg = ProtocolMessage::Spread(self.id);
                for v in self.nodes[node].gamma.clone().unwrap_or_default() {
                    self.send(node, v, msg);
                }
            }
            Some(_) => {}
        }
    }

    fn handle_token(&mut self, node: usize, sender: usize, t: usize) {
        let step = t + 1;
        if self.nodes[node].flooded || step <= self.nodes[node].token_step {
            return;
        }
        if self.nodes[node].predecessor.is_none() {
            self.nodes[node].predecessor = Some(sender);
            self.select_gamma(node, Some(sender));
        }
        let hops = self.nodes[sender].hops + 1;
        let state = &mut self.nodes[node];
        state.token_step = step;
        state.hops = hops;
        state.pending = None;
        state.holder = Some(Holder { step, received: step, prev: Some(sender) });
        self.token_path.push(node);

        let reps = if t > 1 && step <= self.depth { 2 } else { 1 };
        let msg = ProtocolMessage::Spread(self.id);
        let targets: Vec<usize> = self.gamma_vs(node).into_iter().filter(|&v| v != sender).collect();
        for _ in 0..reps {
            for &v in &targets {
                self.send(node, v, msg);
            }
        }
        let gen = self.bump(node);
        self.push(0.0, Action::Decide { node, gen });
    }

    fn decide(&mut self, node: usize, gen: u64) {
        let state = &self.nodes[node];
        if state.gen != gen || state.flooded {
            return;
        }
        let Some(holder) = state.holder else { return };
        if holder.step >= self.depth {
            let wait = self.artificial_wait(node);
            self.push(wait, Action::FloodStart { node, gen });
            return;
        }
        let p = self.rule.probability(holder.step, holder.received, state.hops);
        let x: f64 = self.rng.random();
        if x < p {
            let candidates: Vec<usize> = self
                .gamma_vs(node)
                .into_iter()
                .filter(|&v| Some(v) != holder.prev)
                .collect();
            if let Some(&w) = candidates.choose(&mut self.rng) {
                let st = &mut self.nodes[node];
                st.holder = None;
                st.pending = Some(Pending { step: holder.step, prev: holder.prev, tried: vec![w] });
                self.pass_token(node, w, holder.step);
                return;
            }
            self.log(node, EventKind::Degenerate, ProtocolMessage::Spread(self.id), None);
        }
        self.log(node, EventKind::Keep, ProtocolMessage::Spread(self.id), None);
        let wait = self.artificial_wait(node);
        self.push(wait, Action::Spread { node, gen });
    }

    fn spread(&mut self, node: usize, gen: u64) {
        if self.nodes[node].gen != gen || self.nodes[node].flooded {
            return;
        }
        let msg = ProtocolMessage::Spread(self.id);
        for v in self.gamma_vs(node) {
            self.send(node, v, msg);
        }
        if let Some(h) = self.nodes[node].holder.as_mut() {
            h.step += 1;
            self.nodes[node].token_step = h.step;
        }
        self.push(0.0, Action::Decide { node, gen });
    }

    fn timeout(&mut self, node: usize, gen: u64) {
        if self.nodes[node].gen != gen || self.nodes[node].flooded {
            return;
        }
        let Some(pending) = self.nodes[node].pending.clone() else { return };
        let msg = ProtocolMessage::Token { sender: node, t: pending.step, id: self.id };
        self.log(node, EventKind::Timeout, msg, pending.tried.last().copied());
        let untried: Vec<usize> = self
            .gamma_vs(node)
            .into_iter()
            .filter(|&v| Some(v) != pending.prev && !pending.tried.contains(&v))
            .collect();
        if let Some(&w) = untried.choose(&mut self.rng) {
            if let Some(p) = self.nodes[node].pending.as_mut() {
                p.tried.push(w);
            }
            self.log(node, EventKind::Retransmit, msg, Some(w));
            self.passes += 1;
            self.send(node, w, msg);
            self.arm_timer(node);
            return;
        }
        // Nobody left to hand the token to: hold it again and keep spreading.
        let st = &mut self.nodes[node];
        st.pending = None;
        st.holder = Some(Holder {
            step: pending.step,
            received: pending.step,
            prev: pending.prev,
        });
        if !self.token_path.last().is_some_and(|&v| v == node) {
            self.token_path.push(node);
        }
        self.log(node, EventKind::Keep, ProtocolMessage::Spread(self.id), None);
        let gen = self.bump(node);
        let wait = self.artificial_wait(node);
        self.push(wait, Action::Spread { node, gen });
    }

    fn begin_flood(&mut self, node: usize) {
        self.flood_start.get_or_insert(self.now);
        let msg = ProtocolMessage::Flood(self.id);
        self.log(node, EventKind::FloodStart, msg, None);
        self.mark_flooded(node);
        for &v in self.g.neighbors(node) {
            self.send(node, v, msg);
        }
    }

    fn mark_flooded(&mut self, node: usize) {
        let st = &mut self.nodes[node];
        st.flooded = true;
        st.has_message = true;
        st.holder = None;
        st.pending = None;
        st.gen += 1;
    }

    fn receive_flood(&mut self, node: usize, from: usize) {
        if self.nodes[node].flooded {
            return;
        }
        self.mark_flooded(node);
        let msg = ProtocolMessage::Flood(self.id);
        for &v in self.g.neighbors(node) {
            if v != from {
                self.send(node, v, msg);
            }
        }
    }
}

/// Runs one simulation on an existing graph.
pub fn run_on_graph(g: &Graph, cfg: &SimConfig, rule: PassRule) -> Result<SimOutcome> {
    Ok(Simulation::new(g, cfg, rule)?.run())
}

/// Builds the graph and schedule described by `cfg` and runs one simulation.
pub fn run_simulation(cfg: &SimConfig) -> Result<(Graph, SimOutcome)> {
    cfg.validate()?;
    let g = cfg.build_graph()?;
    let rule = PassRule::for_config(cfg, g.n(), g.k().max(1))?;
    let outcome = run_on_graph(&g, cfg, rule)?;
    Ok((g, outcome))
}
