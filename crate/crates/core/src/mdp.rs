//! The PU-SU Markov decision process.
//!
//! A state `(t, b, Φ)` holds the PU ARQ attempt index `t`, the number of
//! buffered SU receptions `b` and whether SUrx knows the current PU message.
//! Every cycle starts in `(1, 0, U)` and `t` strictly increases until the
//! cycle ends, so all per-cycle quantities follow from one backward sweep
//! over `t` and long-term averages come from the renewal-reward theorem.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::LinkStats;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Knowledge {
    /// SUrx does not know the PU message.
    U,
    /// SUrx decoded the PU message and cancels it.
    K,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetState {
    pub t: usize,
    pub b: usize,
    pub phi: Knowledge,
}

impl NetState {
    pub const fn unknown(t: usize, b: usize) -> Self {
        Self { t, b, phi: Knowledge::U }
    }

    pub const fn known(t: usize) -> Self {
        Self { t, b: 0, phi: Knowledge::K }
    }

    /// The renewal state `(1, 0, U)`.
    pub const START: NetState = NetState::unknown(1, 0);
}

impl fmt::Display for NetState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{:?})", self.t, self.b, self.phi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Active,
    Idle,
}

/// Enumerated state space for a deadline `D` and buffer size `B`.
///
/// Index order is U-states by `(t, b)` followed by K-states by `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    deadline: usize,
    buffer: usize,
    states: Vec<NetState>,
    u_offsets: Vec<usize>,
    num_u: usize,
}

impl StateSpace {
    pub fn new(deadline: usize, buffer: usize) -> Result<Self> {
        if deadline == 0 || buffer + 1 > deadline {
            return Err(Error::InvalidStateSpace { deadline, buffer });
        }
        let mut states = Vec::new();
        let mut u_offsets = vec![0; deadline + 1];
        for (t, offset) in u_offsets.iter_mut().enumerate().skip(1) {
            *offset = states.len();
            for b in 0..=(t - 1).min(buffer) {
                states.push(NetState::unknown(t, b));
            }
        }
        let num_u = states.len();
        states.extend((2..=deadline).map(NetState::known));
        Ok(Self { deadline, buffer, states, u_offsets, num_u })
    }

    pub fn deadline(&self) -> usize {
        self.deadline
    }

    pub fn buffer(&self) -> usize {
        self.buffer
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[NetState] {
        &self.states
    }

    pub fn state(&self, index: usize) -> NetState {
        self.states[index]
    }

    pub fn u_states(&self) -> &[NetState] {
        &self.states[..self.num_u]
    }

    pub fn k_states(&self) -> &[NetState] {
        &self.states[self.num_u..]
    }

    pub fn contains(&self, s: NetState) -> bool {
        if s.t == 0 || s.t > self.deadline {
            return false;
        }
        match s.phi {
            Knowledge::U => s.b <= (s.t - 1).min(self.buffer),
            Knowledge::K => s.b == 0 && s.t >= 2,
        }
    }

    pub fn index(&self, s: NetState) -> Option<usize> {
        if !self.contains(s) {
            return None;
        }
        Some(match s.phi {
            Knowledge::U => self.u_offsets[s.t] + s.b,
            Knowledge::K => self.num_u + s.t - 2,
        })
    }

    /// Indices ordered by decreasing `t`, so every successor precedes its
    /// predecessors.
    fn backward_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(self.states[i].t));
        order
    }
}

/// Ordered state list for `(D, B)`.
pub fn enumerate_states(deadline: usize, buffer: usize) -> Result<Vec<NetState>> {
    Ok(StateSpace::new(deadline, buffer)?.states)
}

/// One-step transition probabilities from `state` under `action`, zero
/// entries omitted. Buffer increments beyond `B` stay at `B`.
pub fn transition_row(state: NetState, action: Action, stats: &LinkStats, space: &StateSpace) -> Vec<(NetState, f64)> {
    let d = space.deadline();
    let active = action == Action::Active;
    let mut row: Vec<(NetState, f64)> = Vec::with_capacity(4);
    let mut push = |s: NetState, p: f64| {
        if p == 0.0 {
            return;
        }
        match row.iter_mut().find(|(x, _)| *x == s) {
            Some(entry) => entry.1 += p,
            None => row.push((s, p)),
        }
    };
    if state.t >= d {
        push(NetState::START, 1.0);
        return row;
    }
    let q_pp = if active { stats.q_pp_active } else { stats.q_pp_idle };
    push(NetState::START, 1.0 - q_pp);
    match state.phi {
        Knowledge::K => push(NetState::known(state.t + 1), q_pp),
        Knowledge::U => {
            let next_b = (state.b + 1).min(space.buffer());
            if active {
                push(NetState::unknown(state.t + 1, state.b), q_pp * (stats.q_ps_active - stats.p_buf));
                push(NetState::unknown(state.t + 1, next_b), q_pp * stats.p_buf);
                push(NetState::known(state.t + 1), q_pp * (1.0 - stats.q_ps_active));
            } else {
                push(NetState::unknown(state.t + 1, state.b), q_pp * stats.q_ps_idle);
                push(NetState::known(state.t + 1), q_pp * (1.0 - stats.q_ps_idle));
            }
        }
    }
    row
}

/// Transition row for the randomized action `μ`.
pub fn mixed_transition_row(state: NetState, prob: f64, stats: &LinkStats, space: &StateSpace) -> Vec<(NetState, f64)> {
    let mut row = Vec::with_capacity(4);
    for (action, w) in [(Action::Active, prob), (Action::Idle, 1.0 - prob)] {
        if w == 0.0 {
            continue;
        }
        for (s, p) in transition_row(state, action, stats, space) {
            match row.iter_mut().find(|(x, _): &&mut (NetState, f64)| *x == s) {
                Some(entry) => entry.1 += w * p,
                None => row.push((s, w * p)),
            }
        }
    }
    row
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RewardKind {
    Throughput,
    Access,
    Duration,
}

/// Expected one-slot reward in `state` when the SU accesses w.p. `prob`.
pub fn state_reward(state: NetState, prob: f64, stats: &LinkStats, kind: RewardKind) -> f64 {
    match kind {
        RewardKind::Access => prob,
        RewardKind::Duration => 1.0,
        RewardKind::Throughput => match state.phi {
            Knowledge::K => prob * stats.t_sk,
            Knowledge::U => {
                let decode = prob * (1.0 - stats.q_ps_active) + (1.0 - prob) * (1.0 - stats.q_ps_idle);
                prob * stats.t_su + decode * state.b as f64 * stats.rate_su
            }
        },
    }
}

/// Stationary randomized access policy: one access probability per state.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    space: Arc<StateSpace>,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(space: Arc<StateSpace>, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != space.len() {
            return Err(Error::InvalidPolicy(format!("expected {} probabilities, got {}", space.len(), probs.len())));
        }
        if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidPolicy(format!("probability {p} at {} is outside [0, 1]", space.state(i))));
        }
        Ok(Self { space, probs })
    }

    pub fn from_fn(space: Arc<StateSpace>, mut f: impl FnMut(NetState) -> f64) -> Result<Self> {
        let probs = space.states().iter().map(|&s| f(s)).collect();
        Self::new(space, probs)
    }

    pub fn idle(space: Arc<StateSpace>) -> Self {
        let n = space.len();
        Self { space, probs: vec![0.0; n] }
    }

    pub fn always_active(space: Arc<StateSpace>) -> Self {
        let n = space.len();
        Self { space, probs: vec![1.0; n] }
    }

    /// Active with probability `prob` in every K-state, idle in U-states.
    pub fn k_only(space: Arc<StateSpace>, prob: f64) -> Result<Self> {
        Self::from_fn(space, |s| if s.phi == Knowledge::K { prob } else { 0.0 })
    }

    /// Deterministic policy whose bit `i` gives the action in state `i`.
    pub fn from_bitmask(space: Arc<StateSpace>, mask: u64) -> Self {
        let probs = (0..space.len()).map(|i| ((mask >> i) & 1) as f64).collect();
        Self { space, probs }
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob_at(&self, index: usize) -> f64 {
        self.probs[index]
    }

    pub fn prob(&self, s: NetState) -> Option<f64> {
        self.space.index(s).map(|i| self.probs[i])
    }

    pub fn set_prob(&mut self, index: usize, prob: f64) {
        assert!((0.0..=1.0).contains(&prob), "access probability {prob} outside [0, 1]");
        self.probs[index] = prob;
    }

    pub fn is_deterministic(&self) -> bool {
        self.probs.iter().all(|&p| p == 0.0 || p == 1.0)
    }

    /// Bit `i` set iff the policy is active with probability 1 in state `i`.
    pub fn bitmask(&self) -> u64 {
        self.probs.iter().enumerate().filter(|(_, &p)| p == 1.0).fold(0, |m, (i, _)| m | (1 << i))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PolicyEntry {
    t: usize,
    b: usize,
    phi: Knowledge,
    prob: f64,
}

impl Serialize for Policy {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let entries: Vec<PolicyEntry> = self
            .space
            .states()
            .iter()
            .zip(&self.probs)
            .map(|(s, &prob)| PolicyEntry { t: s.t, b: s.b, phi: s.phi, prob })
            .collect();
        entries.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Policy {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let entries = Vec::<PolicyEntry>::deserialize(deserializer)?;
        Policy::from_entries(&entries).map_err(serde::de::Error::custom)
    }
}

impl Policy {
    fn from_entries(entries: &[PolicyEntry]) -> Result<Self> {
        let deadline = entries.iter().map(|e| e.t).max().ok_or_else(|| Error::InvalidPolicy("empty policy".into()))?;
        let buffer = entries.iter().filter(|e| e.phi == Knowledge::U).map(|e| e.b).max().unwrap_or(0);
        let space = Arc::new(StateSpace::new(deadline, buffer)?);
        let mut probs = vec![f64::NAN; space.len()];
        for e in entries {
            let s = NetState { t: e.t, b: e.b, phi: e.phi };
            let i =
                space.index(s).ok_or_else(|| Error::InvalidPolicy(format!("state {s} is not in the state space")))?;
            if !probs[i].is_nan() {
                return Err(Error::InvalidPolicy(format!("state {s} listed twice")));
            }
            probs[i] = e.prob;
        }
        if let Some(i) = probs.iter().position(|p| p.is_nan()) {
            return Err(Error::InvalidPolicy(format!("state {} has no entry", space.state(i))));
        }
        Policy::new(space, probs)
    }
}

/// Expected per-cycle reward `G`, accesses `V` and slots `Dur` from each state
/// until the cycle ends.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleValues {
    space: Arc<StateSpace>,
    pub g: Vec<f64>,
    pub v: Vec<f64>,
    pub dur: Vec<f64>,
}

impl CycleValues {
    pub fn at(&self, s: NetState) -> (f64, f64, f64) {
        let i = self.space.index(s).expect("state outside the state space");
        (self.g[i], self.v[i], self.dur[i])
    }

    /// Continuation value of landing in `s`: zero at cycle end.
    fn continuation(&self, s: NetState) -> (f64, f64, f64) {
        if s == NetState::START {
            (0.0, 0.0, 0.0)
        } else {
            self.at(s)
        }
    }

    /// `Σ_next P(next) X(next)` for a transition row.
    pub fn expected_continuation(&self, row: &[(NetState, f64)]) -> (f64, f64, f64) {
        row.iter().fold((0.0, 0.0, 0.0), |acc, &(s, p)| {
            let (g, v, d) = self.continuation(s);
            (acc.0 + p * g, acc.1 + p * v, acc.2 + p * d)
        })
    }
}

pub fn cycle_values(policy: &Policy, stats: &LinkStats) -> CycleValues {
    let space = policy.space().clone();
    let n = space.len();
    let mut values = CycleValues { space: space.clone(), g: vec![0.0; n], v: vec![0.0; n], dur: vec![0.0; n] };
    for i in space.backward_order() {
        let s = space.state(i);
        let mu = policy.prob_at(i);
        let row = mixed_transition_row(s, mu, stats, &space);
        let (g, v, d) = values.expected_continuation(&row);
        values.g[i] = state_reward(s, mu, stats, RewardKind::Throughput) + g;
        values.v[i] = state_reward(s, mu, stats, RewardKind::Access) + v;
        values.dur[i] = state_reward(s, mu, stats, RewardKind::Duration) + d;
    }
    values
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyMetrics {
    pub t_s_bar: f64,
    pub w_s_bar: f64,
    pub t_p_bar: f64,
    pub p_s_ratio: f64,
}

impl PolicyMetrics {
    pub fn from_rates(t_s_bar: f64, w_s_bar: f64, stats: &LinkStats) -> Self {
        Self {
            t_s_bar,
            w_s_bar,
            t_p_bar: stats.t_p_idle - (stats.t_p_idle - stats.t_p_active) * w_s_bar,
            p_s_ratio: w_s_bar,
        }
    }
}

pub fn metrics_from_values(values: &CycleValues, stats: &LinkStats) -> PolicyMetrics {
    let (g, v, d) = values.at(NetState::START);
    PolicyMetrics::from_rates(g / d, v / d, stats)
}

pub fn long_term_metrics(policy: &Policy, stats: &LinkStats) -> PolicyMetrics {
    metrics_from_values(&cycle_values(policy, stats), stats)
}

/// Steady-state probabilities aligned with the policy's state space.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pub pi: Vec<f64>,
    /// `T_sU·W̄_s`: throughput without interference cancellation.
    pub plain: f64,
    /// FIC gain `Σ_K π μ (T_sK − T_sU)`.
    pub fic: f64,
    /// BIC gain from buffered receptions recovered on PU decoding.
    pub bic: f64,
    pub w_s_bar: f64,
}

impl StationaryDistribution {
    pub fn t_s_bar(&self) -> f64 {
        self.plain + self.fic + self.bic
    }
}

/// Solves `πP = π`, `Σπ = 1` directly. Used to cross-check the renewal-reward
/// evaluation.
pub fn stationary_distribution(policy: &Policy, stats: &LinkStats) -> Result<StationaryDistribution> {
    let space = policy.space();
    let n = space.len();
    // A = Pᵀ − I with the last equation replaced by normalization
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (i, &s) in space.states().iter().enumerate() {
        for (next, p) in mixed_transition_row(s, policy.prob_at(i), stats, space) {
            let j = space.index(next).expect("successor outside the state space");
            a[(j, i)] += p;
        }
        a[(i, i)] -= 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    rhs[n - 1] = 1.0;
    let pi = a.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    let pi: Vec<f64> = pi.iter().copied().collect();

    let mut w = 0.0;
    let mut fic = 0.0;
    let mut bic = 0.0;
    for (i, &s) in space.states().iter().enumerate() {
        let mu = policy.prob_at(i);
        w += pi[i] * mu;
        match s.phi {
            Knowledge::K => fic += pi[i] * mu * (stats.t_sk - stats.t_su),
            Knowledge::U => {
                let decode = 1.0 - stats.q_ps_idle - mu * (stats.q_ps_active - stats.q_ps_idle);
                bic += pi[i] * s.b as f64 * stats.rate_su * decode;
            }
        }
    }
    Ok(StationaryDistribution { pi, plain: stats.t_su * w, fic, bic, w_s_bar: w })
}
