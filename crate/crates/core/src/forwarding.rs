//! Virtual-source passing probabilities derived from a distance distribution.
//!
//! The token's distance from the true source is modelled as a time
//! inhomogeneous Markov chain: at step `t` a holder at distance `h` moves one
//! hop outward with probability `p_t(h)` and stays otherwise. The target state
//! at step `t` is the distance distribution `f` restricted to `0..t` and
//! renormalized, so every node reachable within `t - 1` hops is equally likely
//! to be the source. When a target is not reachable in one step, the targets
//! are adjusted backwards from the final step (see [`smooth_targets`]).

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack below which a feasibility violation is attributed to rounding.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-12;

/// Target distance distribution of the token at step `t` (length `t`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub t: usize,
    pub probs: Vec<f64>,
}

impl TargetState {
    pub fn initial() -> Self {
        TargetState { t: 1, probs: vec![1.0] }
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Total variation distance to another state of the same step.
    pub fn total_variation(&self, other: &TargetState) -> f64 {
        let len = self.probs.len().max(other.probs.len());
        0.5 * (0..len)
            .map(|i| {
                let a = self.probs.get(i).copied().unwrap_or(0.0);
                let b = other.probs.get(i).copied().unwrap_or(0.0);
                (a - b).abs()
            })
            .sum::<f64>()
    }
}

/// Per-distance outward probabilities `p_t(h)` for `h in 0..t`.
///
/// These fully determine the bidiagonal, column-stochastic `(t+1) x t` matrix
/// mapping the state at step `t` to step `t + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub t: usize,
    pub p: Vec<f64>,
}

impl TransitionMatrix {
    pub fn new(t: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != t {
            return Err(Error::param(format!("step {t} needs {t} probabilities, got {}", p.len())));
        }
        if let Some(bad) = p.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::param(format!("probability {bad} outside [0, 1]")));
        }
        Ok(TransitionMatrix { t, p })
    }

    /// Dense `(t+1) x t` matrix, row-major.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.t]; self.t + 1];
        for (h, &p) in self.p.iter().enumerate() {
            m[h][h] = 1.0 - p;
            m[h + 1][h] = p;
        }
        m
    }
}

/// A feasibility violation: the exact solution would need `required` at distance `i` of step `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: usize,
    pub i: usize,
    pub required: f64,
}

fn partial_target(f: &[f64], t: usize) -> Result<Vec<f64>> {
    let probs: Vec<f64> = (0..t).map(|i| f.get(i).copied().unwrap_or(0.0)).collect();
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) {
        return Err(Error::param(format!("no mass within the first {t} distances")));
    }
    Ok(probs.into_iter().map(|x| x / total).collect())
}

fn check_distribution(f: &[f64]) -> Result<()> {
    if f.is_empty() || f.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::param("distance distribution must be non-empty, finite and non-negative"));
    }
    Ok(())
}

/// `probs[i] = f(i) / sum_{s < t} f(s)`.
pub fn target_state(f: &[f64], t: usize) -> Result<TargetState> {
    check_distribution(f)?;
    if t < 1 || t > f.len() {
        return Err(Error::param(format!("step {t} outside 1..={}", f.len())));
    }
    Ok(TargetState {
        t,
        probs: partial_target(f, t)?,
    })
}

/// Solves one transition from `from` (length t) to `to` (length t+1).
///
/// Returns the clamped probabilities and every index where the exact
/// solution leaves `[0, 1]`.
fn solve_step(from: &[f64], to: &[f64]) -> (Vec<f64>, Vec<(usize, f64)>) {
    let t = from.len();
    debug_assert_eq!(to.len(), t + 1);
    let mut p = Vec::with_capacity(t);
    let mut bad = Vec::new();
    let mut flow = 0.0;
    for i in 0..t {
        flow += from[i] - to[i];
        let violated = flow < -FEASIBILITY_TOLERANCE || flow - from[i] > FEASIBILITY_TOLERANCE;
        if from[i] == 0.0 {
            // Zero-mass rule: nothing to move.
            if violated || flow > FEASIBILITY_TOLERANCE {
                bad.push((i, f64::INFINITY.copysign(flow)));
            }
            p.push(0.0);
            continue;
        }
        let exact = flow / from[i];
        if violated {
            bad.push((i, exact));
        }
        p.push(exact.clamp(0.0, 1.0));
    }
    (p, bad)
}

/// Violations of the one-step reachability condition for the transition `t -> t + 1`.
///
/// Distances beyond the support of `f` count as zero mass.
pub fn check_feasibility(f: &[f64], t: usize) -> Result<Vec<Violation>> {
    check_distribution(f)?;
    if t < 2 {
        return Err(Error::param("feasibility is checked from step 2 on"));
    }
    let from = partial_target(f, t)?;
    let to = partial_target(f, t + 1)?;
    // The first-row condition holds for any non-negative f.
    debug_assert!(to[0] <= from[0] + FEASIBILITY_TOLERANCE);
    let (_, bad) = solve_step(&from, &to);
    Ok(bad
        .into_iter()
        .map(|(i, required)| Violation { t, i, required })
        .collect())
}

/// Schedule of passing probabilities for steps `1..T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardingSchedule {
    pub final_step: usize,
    /// Transition `t -> t + 1` for `t = 1..T-1`; `per_step[t - 1]` is step `t`.
    pub per_step: Vec<TransitionMatrix>,
    /// Combined scalar `p_t = sum_h f_t(h) p_t(h)`, aligned with `per_step`.
    pub combined: Vec<f64>,
    pub smoothed: bool,
    /// Largest total-variation distance between an adjusted target and the ideal one.
    pub deviation: f64,
    /// Target states `P_1..P_T` the schedule realizes.
    pub targets: Vec<TargetState>,
}

impl ForwardingSchedule {
    fn from_targets(targets: Vec<TargetState>, smoothed: bool, deviation: f64) -> Result<Self> {
        let mut per_step = Vec::with_capacity(targets.len() - 1);
        let mut combined = Vec::with_capacity(targets.len() - 1);
        for pair in targets.windows(2) {
            let (p, bad) = solve_step(&pair[0].probs, &pair[1].probs);
            if !bad.is_empty() {
                return Err(Error::Infeasible {
                    violations: bad
                        .into_iter()
                        .map(|(i, required)| Violation { t: pair[0].t, i, required })
                        .collect(),
                });
            }
            let m = TransitionMatrix { t: pair[0].t, p };
            combined.push(combined_probability(&pair[0], &m)?);
            per_step.push(m);
        }
        Ok(ForwardingSchedule {
            final_step: targets.len(),
            per_step,
            combined,
            smoothed,
            deviation,
            targets,
        })
    }

    /// A schedule with the same scalar probability at every step, for experiments.
    pub fn constant(final_step: usize, p: f64) -> Result<Self> {
        Self::from_combined(vec![p; final_step.saturating_sub(1)])
    }

    /// A schedule defined only by scalar probabilities `p_1..p_{T-1}`.
    ///
    /// Per-distance probabilities are all set to the scalar, and the targets
    /// are whatever the resulting chain produces.
    pub fn from_combined(combined: Vec<f64>) -> Result<Self> {
        if let Some(bad) = combined.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::param(format!("probability {bad} outside [0, 1]")));
        }
        let mut targets = vec![TargetState::initial()];
        let mut per_step = Vec::with_capacity(combined.len());
        for (idx, &p) in combined.iter().enumerate() {
            let m = TransitionMatrix { t: idx + 1, p: vec![p; idx + 1] };
            targets.push(evolve(targets.last().expect("non-empty"), &m)?);
            per_step.push(m);
        }
        Ok(ForwardingSchedule {
            final_step: combined.len() + 1,
            per_step,
            combined,
            smoothed: false,
            deviation: 0.0,
            targets,
        })
    }

    /// Scalar passing probability used by a virtual source at step `t`, if the schedule covers it.
    pub fn probability_at(&self, t: usize) -> Option<f64> {
        t.checked_sub(1).and_then(|i| self.combined.get(i)).copied()
    }

    /// Passing probability for a holder that received the token at step `received`
    /// and has kept it until step `t`.
    ///
    /// The holder's distance is distributed like the mass that moved outward
    /// into step `received`, so only distances up to `received - 1` are weighted.
    pub fn holder_probability(&self, received: usize, t: usize) -> Option<f64> {
        let step = self.per_step.get(t.checked_sub(1)?)?;
        let posterior: Vec<f64> = if received <= 1 {
            vec![1.0]
        } else {
            let prev = self.per_step.get(received - 2)?;
            let state = self.targets.get(received - 2)?;
            let mut q = vec![0.0];
            q.extend(state.probs.iter().zip(&prev.p).map(|(s, p)| s * p));
            let total: f64 = q.iter().sum();
            if total <= 0.0 {
                return self.probability_at(t);
            }
            q.into_iter().map(|x| x / total).collect()
        };
        Some(posterior.iter().zip(&step.p).map(|(q, p)| q * p).sum())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl Serialize for ForwardingSchedule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("ForwardingSchedule", 5)?;
        st.serialize_field("T", &self.final_step)?;
        let rows: Vec<&Vec<f64>> = self.per_step.iter().map(|m| &m.p).collect();
        st.serialize_field("per_step", &rows)?;
        st.serialize_field("combined", &self.combined)?;
        st.serialize_field("smoothed", &self.smoothed)?;
        st.serialize_field("deviation", &self.deviation)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for ForwardingSchedule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Doc {
            #[serde(rename = "T")]
            final_step: usize,
            per_step: Vec<Vec<f64>>,
            combined: Vec<f64>,
            smoothed: bool,
            deviation: f64,
        }
        use serde::de::Error as _;
        let doc = Doc::deserialize(d)?;
        if doc.per_step.len() + 1 != doc.final_step || doc.combined.len() != doc.per_step.len() {
            return Err(D::Error::custom("schedule lengths do not match T"));
        }
        let mut targets = vec![TargetState::initial()];
        let mut per_step = Vec::with_capacity(doc.per_step.len());
        for (idx, p) in doc.per_step.into_iter().enumerate() {
            let m = TransitionMatrix::new(idx + 1, p).map_err(D::Error::custom)?;
            targets.push(evolve(targets.last().expect("non-empty"), &m).map_err(D::Error::custom)?);
            per_step.push(m);
        }
        Ok(ForwardingSchedule {
            final_step: doc.final_step,
            per_step,
            combined: doc.combined,
            smoothed: doc.smoothed,
            deviation: doc.deviation,
            targets,
        })
    }
}

fn ideal_targets(f: &[f64], final_step: usize) -> Result<Vec<TargetState>> {
    check_distribution(f)?;
    if final_step < 2 {
        return Err(Error::param("a schedule needs a final step T >= 2"));
    }
    if final_step > f.len() {
        return Err(Error::param(format!(
            "final step {final_step} exceeds the distribution support {}",
            f.len()
        )));
    }
    (1..=final_step).map(|t| target_state(f, t)).collect()
}

/// Exact per-distance probabilities mapping each target state onto the next.
///
/// Fails with [`Error::Infeasible`] listing every violated `(t, i)` when some
/// target is not reachable in one step.
pub fn ideal_probabilities(f: &[f64], final_step: usize) -> Result<ForwardingSchedule> {
    let targets = ideal_targets(f, final_step)?;
    let violations: Vec<Violation> = targets
        .windows(2)
        .flat_map(|pair| {
            let (_, bad) = solve_step(&pair[0].probs, &pair[1].probs);
            bad.into_iter()
                .map(move |(i, required)| Violation { t: pair[0].t, i, required })
        })
        .collect();
    if !violations.is_empty() {
        return Err(Error::Infeasible { violations });
    }
    ForwardingSchedule::from_targets(targets, false, 0.0)
}

/// Adjusts one target state so that `next` is reachable from it in one step.
///
/// Walks the distances from the top down. `chi` is the (negative) sum of the
/// corrections already applied above `i`; `delta` is the smallest change at
/// `i` that satisfies the reachability bound given the entries above it. The
/// larger of the two is applied, which raises entries only where needed and
/// otherwise hands the added mass back from lower distances.
fn adjust_towards(ideal: &[f64], next: &[f64]) -> Vec<f64> {
    let t = ideal.len();
    let mut adjusted = ideal.to_vec();
    for i in (0..t).rev() {
        let chi: f64 = (i + 1..t).map(|j| ideal[j] - adjusted[j]).sum();
        let delta = next[t] - ideal[i] + (i + 1..t).map(|j| next[j] - adjusted[j]).sum::<f64>();
        adjusted[i] = ideal[i] + chi.max(delta);
    }
    for x in adjusted.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let total: f64 = adjusted.iter().sum();
    adjusted.into_iter().map(|x| x / total).collect()
}

/// Target states `P'_1..P'_T` with every transition reachable.
///
/// The final state is kept exactly; earlier states are corrected backwards
/// with the smallest changes that keep the next state reachable. Feasible
/// inputs come back unchanged.
pub fn smooth_targets(f: &[f64], final_step: usize) -> Result<Vec<TargetState>> {
    let ideal = ideal_targets(f, final_step)?;
    let mut adjusted = ideal.clone();
    for idx in (0..final_step - 1).rev() {
        let (_, bad) = solve_step(&ideal[idx].probs, &adjusted[idx + 1].probs);
        if bad.is_empty() {
            continue;
        }
        let probs = adjust_towards(&ideal[idx].probs, &adjusted[idx + 1].probs);
        adjusted[idx] = TargetState { t: idx + 1, probs };
    }
    Ok(adjusted)
}

/// Exact schedule when feasible; with `smooth`, the schedule over adjusted targets otherwise.
pub fn schedule(f: &[f64], final_step: usize, smooth: bool) -> Result<ForwardingSchedule> {
    match ideal_probabilities(f, final_step) {
        Err(Error::Infeasible { .. }) if smooth => {
            let ideal = ideal_targets(f, final_step)?;
            let adjusted = smooth_targets(f, final_step)?;
            let deviation = ideal
                .iter()
                .zip(&adjusted)
                .map(|(a, b)| a.total_variation(b))
                .fold(0.0, f64::max);
            ForwardingSchedule::from_targets(adjusted, true, deviation)
        }
        other => other,
    }
}

/// Scalar passing probability `p_t = sum_h f_t(h) p_t(h)`.
pub fn combined_probability(state: &TargetState, m: &TransitionMatrix) -> Result<f64> {
    if state.probs.len() != m.p.len() {
        return Err(Error::param(format!(
            "state has {} entries, transition has {}",
            state.probs.len(),
            m.p.len()
        )));
    }
    let p: f64 = state.probs.iter().zip(&m.p).map(|(s, p)| s * p).sum();
    Ok(p.clamp(0.0, 1.0))
}

/// One Markov step: `out[i] = p[i-1] in[i-1] + (1 - p[i]) in[i]`.
pub fn evolve(state: &TargetState, m: &TransitionMatrix) -> Result<TargetState> {
    let t = state.probs.len();
    if m.p.len() != t {
        return Err(Error::param(format!("state has {t} entries, transition has {}", m.p.len())));
    }
    let mut out = vec![0.0; t + 1];
    for (h, (&mass, &p)) in state.probs.iter().zip(&m.p).enumerate() {
        out[h] += (1.0 - p) * mass;
        out[h + 1] += p * mass;
    }
    Ok(TargetState { t: state.t + 1, probs: out })
}

/// Original adaptive-diffusion passing probability on a `d`-regular tree.
pub fn eq2_baseline(d: usize, t: usize, h: usize) -> Result<f64> {
    if d < 2 || t < 1 || h < 1 || h > t.div_ceil(2) {
        return Err(Error::param(format!(
            "need d >= 2, t >= 1 and 1 <= h <= ceil(t/2), got d = {d}, t = {t}, h = {h}"
        )));
    }
    let (t, h) = (t as f64, h as f64);
    let p = if d == 2 {
        (t - 2.0 * h + 2.0) / (t + 2.0)
    } else {
        let base = (d - 1) as f64;
        (base.powf(t / 2.0 - h + 1.0) - 1.0) / (base.powf(t / 2.0 + 1.0) - 1.0)
    };
    Ok(p.clamp(0.0, 1.0))
}
