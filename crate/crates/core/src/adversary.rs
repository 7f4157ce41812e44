//! Colluding observers: source-estimation attacks on simulation traces and
//! closed-form privacy estimates.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::graph::{eccentricities, jordan_center_with, CandidatePool, Graph, NodeSet};
use crate::protocol::{EventKind, EventTrace, MessageId, Variant};

/// Colluding nodes. They know the full static topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackerSet {
    pub members: NodeSet,
    pub beta: f64,
    pub knows_topology: bool,
}

/// `ceil(beta n)`, ignoring rounding noise in `beta n`.
pub fn attacker_count(n: usize, beta: f64) -> usize {
    (beta * n as f64 - 1e-9).ceil().max(0.0) as usize
}

impl AttackerSet {
    pub fn new(members: NodeSet, n: usize) -> Result<Self> {
        if let Some(bad) = members.iter().find(|&v| v >= n) {
            return Err(Error::param(format!("attacker {bad} out of range for n = {n}")));
        }
        if members.len() >= n {
            return Err(Error::param("at least one node must be honest"));
        }
        Ok(AttackerSet {
            beta: members.len() as f64 / n as f64,
            members,
            knows_topology: true,
        })
    }

    /// `count` attackers drawn uniformly without replacement, never from `exclude`.
    pub fn uniform(n: usize, count: usize, exclude: &[usize], seed: u64) -> Result<Self> {
        let pool: Vec<usize> = (0..n).filter(|v| !exclude.contains(v)).collect();
        if count > pool.len() || count >= n {
            return Err(Error::param(format!(
                "cannot place {count} attackers among {} eligible nodes",
                pool.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let members = sample(&mut rng, pool.len(), count).into_iter().map(|i| pool[i]).collect();
        Self::new(members, n)
    }

    pub fn contains(&self, v: usize) -> bool {
        self.members.contains(v)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Adds one attacker linked to every existing node. Returns the new graph and its id.
pub fn add_connected_attacker(g: &Graph) -> Result<(Graph, usize)> {
    let hub = g.n();
    let edges: Vec<(usize, usize)> = g.edges().chain((0..hub).map(|v| (v, hub))).collect();
    Ok((Graph::from_edges(hub + 1, &edges)?, hub))
}

/// One message receipt at an attacker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub observer: usize,
    pub message: MessageId,
    pub time: f64,
    /// Neighbour the message arrived from.
    pub link: usize,
    pub variant: Variant,
    pub token_step: Option<usize>,
}

/// Every receipt at an attacker, in trace order.
pub fn observations(trace: &EventTrace, attackers: &AttackerSet) -> Vec<Observation> {
    trace
        .iter()
        .filter(|r| r.kind == EventKind::Receive && attackers.contains(r.actor))
        .filter_map(|r| {
            Some(Observation {
                observer: r.actor,
                message: r.message.id(),
                time: r.time,
                link: r.peer?,
                variant: r.message.variant(),
                token_step: r.message.token_step(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMode {
    /// Honest nodes known to hold the message.
    #[default]
    Infected,
    /// Every honest node.
    AllHonest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Knowledge {
    /// Observers plus the neighbours they heard from.
    #[default]
    ReceiptsAndLinks,
    /// Only the observing attackers themselves.
    ReceiptsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AttackOptions {
    pub pool: PoolMode,
    pub knowledge: Knowledge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub candidates: NodeSet,
    pub estimate: usize,
    pub true_source: usize,
    pub success: bool,
    /// 1-based position of the true source when honest nodes are ordered by
    /// eccentricity, then id. `None` if the source is outside the pool.
    pub rank: Option<usize>,
    pub candidate_count: usize,
    pub observations_used: usize,
    pub known_infected: usize,
}

impl AttackReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Jordan-centre estimate of the originator.
///
/// Only receipts up to the first FLOOD seen by any attacker count (ties in
/// time included). The known-infected set is the observers plus, with full
/// link knowledge, the neighbours they heard from.
pub fn jordan_center_attack(
    obs: &[Observation],
    g: &Graph,
    attackers: &AttackerSet,
    true_source: usize,
    opts: AttackOptions,
) -> Result<AttackReport> {
    if obs.is_empty() {
        return Err(Error::NoData);
    }
    let cutoff = obs
        .iter()
        .filter(|o| o.variant == Variant::Flood)
        .map(|o| o.time)
        .fold(f64::INFINITY, f64::min);
    let used: Vec<&Observation> = obs.iter().filter(|o| o.time <= cutoff).collect();

    let mut known = NodeSet::new();
    for o in &used {
        known.insert(o.observer);
        if opts.knowledge == Knowledge::ReceiptsAndLinks {
            known.insert(o.link);
        }
    }
    let honest_known: NodeSet = known.iter().filter(|&v| !attackers.contains(v)).collect();
    let pool: NodeSet = match opts.pool {
        PoolMode::Infected if !honest_known.is_empty() => honest_known,
        _ => (0..g.n()).filter(|&v| !attackers.contains(v)).collect(),
    };
    let candidates = jordan_center_with(g, &known, &CandidatePool::Only(pool.clone()))?;
    let estimate = candidates.first().ok_or(Error::NoData)?;

    let ecc = eccentricities(g, &known);
    let mut order = pool.to_vec();
    order.sort_by_key(|&v| (ecc[v], v));
    let rank = order.iter().position(|&v| v == true_source).map(|i| i + 1);

    Ok(AttackReport {
        candidate_count: candidates.len(),
        candidates,
        estimate,
        true_source,
        success: estimate == true_source,
        rank,
        observations_used: used.len(),
        known_infected: known.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Threshold {
    /// `ceil(log_c(n - a))`.
    pub required: usize,
    /// Whether `(n - a) / c^a <= 1`.
    pub deanonymized: bool,
}

/// Observers needed to pin a sender when each one divides the honest set by `c`.
pub fn deanonymization_threshold(n: usize, a: usize, c: f64) -> Result<Threshold> {
    if !(c > 1.0) {
        return Err(Error::param(format!("expected connections c must exceed 1, got {c}")));
    }
    if a >= n {
        return Err(Error::param(format!("need a < n, got a = {a}, n = {n}")));
    }
    let honest = (n - a) as f64;
    let required = (honest.ln() / c.ln() - 1e-9).ceil().max(0.0) as usize;
    let deanonymized = honest.ln() - a as f64 * c.ln() <= 0.0;
    Ok(Threshold { required, deanonymized })
}

fn check_drawing_args(n: usize, a: usize, pack: usize, ell: usize) -> Result<()> {
    if ell < 1 || ell > a || a >= n || pack < 1 || pack > n {
        return Err(Error::param(format!(
            "need 1 <= ell <= a < n and 1 <= pack <= n, got n = {n}, a = {a}, pack = {pack}, ell = {ell}"
        )));
    }
    Ok(())
}

/// Exact arithmetic is always used up to this many nodes.
pub const EXACT_DRAWINGS_LIMIT: usize = 1000;

/// Above [`EXACT_DRAWINGS_LIMIT`], exact arithmetic is still used while
/// `ln C(n, pack)` stays below this (about 7000 bits).
const EXACT_LN_BUDGET: f64 = 5000.0;

/// Expected number of packs of `pack` distinct nodes, drawn from `n`, until
/// at least `ell` of the `a` attackers have been drawn.
///
/// The alternating sum cancels badly in floating point once `a` reaches a few
/// hundred, so it is evaluated exactly whenever the binomials are of moderate size.
pub fn expected_drawings(n: usize, a: usize, pack: usize, ell: usize) -> Result<f64> {
    check_drawing_args(n, a, pack, ell)?;
    if n <= EXACT_DRAWINGS_LIMIT || ln_binomial(n as u64, pack as u64) <= EXACT_LN_BUDGET {
        let exact = expected_drawings_exact(n, a, pack, ell)?;
        return exact
            .to_f64()
            .ok_or_else(|| Error::param("expected drawings do not fit in f64"));
    }
    expected_drawings_f64(n, a, pack, ell)
}

/// Floating-point evaluation with log-binomials and compensated summation.
///
/// Accurate to about `1e-6` relative for `a` up to a few dozen; loses all
/// precision to cancellation for hundreds of attackers.
pub fn expected_drawings_f64(n: usize, a: usize, pack: usize, ell: usize) -> Result<f64> {
    check_drawing_args(n, a, pack, ell)?;
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    let ln_all = ln_binomial(n as u64, pack as u64);
    for j in 0..ell {
        // 1 - C(n - a + j, pack) / C(n, pack)
        let hit = if n - a + j >= pack {
            -(ln_binomial((n - a + j) as u64, pack as u64) - ln_all).exp_m1()
        } else {
            1.0
        };
        let coeff = (ln_binomial(a as u64, j as u64) + ln_binomial((a - j - 1) as u64, (a - ell) as u64)).exp();
        let sign = if (ell - j + 1) % 2 == 0 { 1.0 } else { -1.0 };
        let term = sign * coeff / hit;
        // Neumaier summation.
        let t = sum + term;
        comp += if sum.abs() >= term.abs() { (sum - t) + term } else { (term - t) + sum };
        sum = t;
    }
    Ok(sum + comp)
}

fn binomial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// Exact rational evaluation of the same alternating sum.
pub fn expected_drawings_exact(n: usize, a: usize, pack: usize, ell: usize) -> Result<BigRational> {
    check_drawing_args(n, a, pack, ell)?;
    let all = binomial(n, pack);
    let mut sum = BigRational::zero();
    for j in 0..ell {
        let denom = &all - binomial(n - a + j, pack);
        let numer = &all * binomial(a, j) * binomial(a - j - 1, a - ell);
        let term = BigRational::new(numer, denom);
        if (ell - j + 1) % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    Ok(sum)
}

/// Depth at which a complete spreading tree, growing by `eta` per node and
/// `eta + 1` at the root, has enrolled `z` nodes besides the root.
pub fn depth_bound(z: f64, eta: usize) -> Result<f64> {
    if eta < 2 {
        return Err(Error::param("depth bound needs eta >= 2"));
    }
    if !(z >= 1.0) {
        return Err(Error::param(format!("node count must be at least 1, got {z}")));
    }
    let eta = eta as f64;
    Ok((1.0 - z * (1.0 - eta) / (eta + 1.0)).ln() / eta.ln() + 1.0)
}

/// Expected token passes until an attacker holds the token: `(n - 1) / a`.
///
/// Returns infinity when there are no attackers.
pub fn token_capture_expectation(n: usize, a: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::param("need at least two nodes"));
    }
    if a == 0 {
        return Ok(f64::INFINITY);
    }
    Ok((n - 1) as f64 / a as f64)
}

/// How `c` and the pack size are chosen per cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PackInterpretation {
    /// `c = pack = eta`.
    TiedToEta,
    Fixed { c: f64, pack: usize },
}

impl PackInterpretation {
    pub fn resolve(self, eta: usize) -> (f64, usize) {
        match self {
            PackInterpretation::TiedToEta => (eta as f64, eta),
            PackInterpretation::Fixed { c, pack } => (c, pack),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DepthCell {
    pub n: usize,
    pub eta: usize,
    pub attackers: usize,
    pub c: f64,
    pub pack: usize,
    pub required: usize,
    pub expected_drawings: f64,
    pub depth: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DepthTable {
    pub beta: f64,
    pub interpretation: PackInterpretation,
    pub ns: Vec<usize>,
    pub etas: Vec<usize>,
    pub cells: Vec<DepthCell>,
}

impl DepthTable {
    pub fn cell(&self, n: usize, eta: usize) -> Option<&DepthCell> {
        self.cells.iter().find(|c| c.n == n && c.eta == eta)
    }

    /// One row per eta, one column per n, depths to one decimal.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eta");
        for n in &self.ns {
            out.push_str(&format!(",{n}"));
        }
        out.push('\n');
        for &eta in &self.etas {
            out.push_str(&eta.to_string());
            for &n in &self.ns {
                let depth = self.cell(n, eta).map(|c| c.depth).unwrap_or(f64::NAN);
                out.push_str(&format!(",{depth:.1}"));
            }
            out.push('\n');
        }
        out
    }

    /// Long form with every intermediate value.
    pub fn to_long_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &self.cells {
            w.serialize(c)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Parse(e.to_string()))?)
            .map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Expected spreading depth before `ceil(log_c(n - a))` attackers are enrolled, per `(n, eta)`.
pub fn reproduce_table2(
    beta: f64,
    ns: &[usize],
    etas: &[usize],
    interpretation: PackInterpretation,
) -> Result<DepthTable> {
    if ns.is_empty() || etas.is_empty() {
        return Err(Error::param("the (n, eta) grid is empty"));
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::param(format!("beta must lie in [0, 1), got {beta}")));
    }
    let mut cells = Vec::new();
    for &eta in etas {
        for &n in ns {
            let a = attacker_count(n, beta);
            if a >= n {
                return Err(Error::param(format!("no honest nodes left for n = {n}")));
            }
            let (c, pack) = interpretation.resolve(eta);
            let required = deanonymization_threshold(n, a, c)?.required.max(1);
            let z = expected_drawings(n, a, pack, required)?;
            cells.push(DepthCell {
                n,
                eta,
                attackers: a,
                c,
                pack,
                required,
                expected_drawings: z,
                depth: depth_bound(z, eta)?,
            });
        }
    }
    Ok(DepthTable {
        beta,
        interpretation,
        ns: ns.to_vec(),
        etas: etas.to_vec(),
        cells,
    })
}
