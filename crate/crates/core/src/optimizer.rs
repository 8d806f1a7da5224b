//! Access-efficiency driven policy optimization.
//!
//! The secondary access efficiency η(s) is the marginal SU throughput per
//! marginal SU access rate obtained by raising the access probability in
//! state `s`. In the low access-rate regime the optimum only uses K-states
//! with a common access probability;
//! above it a greedy path activates the most efficient idle state one at a
//! time, and the optimal policy randomizes one state between two neighbours
//! of that path.

use std::sync::Arc;

use serde::{Serialize, Serializer};

use crate::channel::LinkStats;
use crate::error::{Error, Result};
use crate::mdp::{
    cycle_values, long_term_metrics, metrics_from_values, state_reward, transition_row, Action, CycleValues, NetState,
    Policy, PolicyMetrics, RewardKind, StateSpace,
};

/// Access-rate tolerance when solving for the randomized state.
pub const BLEND_TOLERANCE: f64 = 1e-10;

/// Derivatives of `G`, `V`, `Dur` at a state with respect to its own access
/// probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Derivatives {
    pub g_prime: f64,
    pub v_prime: f64,
    pub d_prime: f64,
}

/// Derivatives at `state` given the policy's cycle values.
///
/// `t` strictly increases within a cycle, so a state is never revisited before
/// the cycle ends and the downstream values do not depend on `μ(state)`.
pub fn derivatives_from_values(
    values: &CycleValues,
    state: NetState,
    stats: &LinkStats,
    space: &StateSpace,
) -> Derivatives {
    let (ga, va, da) = values.expected_continuation(&transition_row(state, Action::Active, stats, space));
    let (gi, vi, di) = values.expected_continuation(&transition_row(state, Action::Idle, stats, space));
    let reward_gain = state_reward(state, 1.0, stats, RewardKind::Throughput)
        - state_reward(state, 0.0, stats, RewardKind::Throughput);
    Derivatives { g_prime: reward_gain + ga - gi, v_prime: 1.0 + va - vi, d_prime: da - di }
}

pub fn cycle_derivatives(policy: &Policy, state: NetState, stats: &LinkStats) -> Derivatives {
    let values = cycle_values(policy, stats);
    derivatives_from_values(&values, state, stats, policy.space())
}

fn eta_from(d: Derivatives, state: NetState, metrics: &PolicyMetrics) -> Result<f64> {
    let denom = d.v_prime - d.d_prime * metrics.w_s_bar;
    if denom <= 0.0 || denom.is_nan() {
        return Err(Error::NonPositiveDenominator { state, value: denom });
    }
    Ok((d.g_prime - d.d_prime * metrics.t_s_bar) / denom)
}

/// Secondary access efficiency of `state` under `policy`.
///
/// Evaluated from the recursions, which stay well defined for states the
/// policy never reaches.
pub fn efficiency(policy: &Policy, state: NetState, stats: &LinkStats) -> Result<f64> {
    let values = cycle_values(policy, stats);
    let metrics = metrics_from_values(&values, stats);
    eta_from(derivatives_from_values(&values, state, stats, policy.space()), state, &metrics)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateEfficiency {
    pub state: NetState,
    #[serde(flatten)]
    pub derivatives: Derivatives,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyReport {
    pub metrics: PolicyMetrics,
    pub states: Vec<StateEfficiency>,
}

pub fn efficiency_report(policy: &Policy, stats: &LinkStats) -> Result<EfficiencyReport> {
    let values = cycle_values(policy, stats);
    let metrics = metrics_from_values(&values, stats);
    let states = policy
        .space()
        .states()
        .iter()
        .map(|&state| {
            let derivatives = derivatives_from_values(&values, state, stats, policy.space());
            Ok(StateEfficiency { state, derivatives, eta: eta_from(derivatives, state, &metrics)? })
        })
        .collect::<Result<_>>()?;
    Ok(EfficiencyReport { metrics, states })
}

/// K-only policy with access probability `eps_w / eps_th` in every K-state.
///
/// Every K-only policy earns `T_sK` per access, so this policy attains
/// `T̄_s = T_sK·W̄_s`. Its access rate equals `eps_w` only when K-state
/// accesses leave the PU outage unchanged or `D ≤ 2`: otherwise SU activity
/// in a K-state lengthens the cycle and `W̄_s` is not linear in the common
/// probability. [`calibrated_low_regime_policy`] meets the budget exactly.
pub fn low_regime_policy(eps_w: f64, eps_th: f64, space: Arc<StateSpace>) -> Result<Policy> {
    if eps_th.is_nan() || eps_th <= 0.0 {
        return Err(Error::InvalidParams(format!("eps_th must be positive, got {eps_th}")));
    }
    if eps_w.is_nan() || eps_w < 0.0 {
        return Err(Error::InvalidParams(format!("eps_w must be nonnegative, got {eps_w}")));
    }
    if eps_w > eps_th {
        return Err(Error::NotLowRegime { eps_w, eps_th });
    }
    Policy::k_only(space, eps_w / eps_th)
}

/// K-only policy whose common access probability is tuned by bisection so
/// that `W̄_s = eps_w` within [`BLEND_TOLERANCE`]; optimal for
/// `eps_w ≤ eps_th` with `T̄_s = T_sK·eps_w`.
pub fn calibrated_low_regime_policy(
    eps_w: f64,
    eps_th: f64,
    stats: &LinkStats,
    space: Arc<StateSpace>,
) -> Result<(Policy, PolicyMetrics)> {
    let mut policy = low_regime_policy(eps_w, eps_th, space)?;
    let mut metrics = long_term_metrics(&policy, stats);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let err = metrics.w_s_bar - eps_w;
        if err.abs() <= BLEND_TOLERANCE {
            break;
        }
        if err < 0.0 {
            lo = k_probability(&policy);
        } else {
            hi = k_probability(&policy);
        }
        policy = Policy::k_only(policy.space().clone(), 0.5 * (lo + hi))?;
        metrics = long_term_metrics(&policy, stats);
    }
    Ok((policy, metrics))
}

fn k_probability(policy: &Policy) -> f64 {
    policy.space().k_states().first().and_then(|&s| policy.prob(s)).unwrap_or(0.0)
}

/// Largest long-term SU access rate allowed by the PU throughput-loss and
/// SU power constraints, capped at 1.
pub fn access_rate_budget(stats: &LinkStats, eps_pu: f64, power_ratio: f64) -> f64 {
    let gap = stats.q_pp_active - stats.q_pp_idle;
    let pu_limit = if gap > 0.0 { (1.0 - stats.q_pp_idle) * eps_pu / gap } else { f64::INFINITY };
    pu_limit.min(power_ratio).min(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathStep {
    pub policy: Policy,
    pub metrics: PolicyMetrics,
    /// State activated relative to the previous step; `None` for the start.
    pub chosen_state: Option<NetState>,
}

impl Serialize for PathStep {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            policy: &'a Policy,
            t_s_bar: f64,
            w_s_bar: f64,
            chosen_state: Option<NetState>,
        }
        Repr {
            policy: &self.policy,
            t_s_bar: self.metrics.t_s_bar,
            w_s_bar: self.metrics.w_s_bar,
            chosen_state: self.chosen_state,
        }
        .serialize(serializer)
    }
}

/// Deterministic policies of the greedy path, starting from the K-only
/// policy. Serializes as the array of steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyPath {
    pub steps: Vec<PathStep>,
    /// Access rate of the K-only policy: boundary of the low regime.
    pub eps_th: f64,
}

impl PolicyPath {
    pub fn last(&self) -> &PathStep {
        self.steps.last().expect("a policy path always has its starting step")
    }
}

impl Serialize for PolicyPath {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.steps.serialize(serializer)
    }
}

/// Builds the greedy path: at each stage activate the idle state of highest
/// efficiency (lowest index on ties) until no idle state has positive
/// efficiency.
pub fn greedy_policy_path(stats: &LinkStats, space: Arc<StateSpace>) -> Result<PolicyPath> {
    let mut policy = Policy::k_only(space.clone(), 1.0)?;
    let values = cycle_values(&policy, stats);
    let metrics = metrics_from_values(&values, stats);
    let eps_th = metrics.w_s_bar;
    let mut steps = vec![PathStep { policy: policy.clone(), metrics, chosen_state: None }];
    let mut values = values;
    let mut metrics = metrics;
    loop {
        let mut best: Option<(usize, f64)> = None;
        for (i, &s) in space.states().iter().enumerate() {
            if policy.prob_at(i) != 0.0 {
                continue;
            }
            let eta = eta_from(derivatives_from_values(&values, s, stats, &space), s, &metrics)?;
            if best.is_none_or(|(_, b)| eta > b) {
                best = Some((i, eta));
            }
        }
        let Some((i, eta)) = best else { break };
        if eta <= 0.0 {
            break;
        }
        policy.set_prob(i, 1.0);
        values = cycle_values(&policy, stats);
        metrics = metrics_from_values(&values, stats);
        steps.push(PathStep { policy: policy.clone(), metrics, chosen_state: Some(space.state(i)) });
    }
    Ok(PolicyPath { steps, eps_th })
}

/// Optimal policy and its metrics under the access budget `eps_w`.
pub fn optimal_policy(eps_w: f64, path: &PolicyPath, stats: &LinkStats) -> Result<(Policy, PolicyMetrics)> {
    if eps_w.is_nan() || eps_w < 0.0 {
        return Err(Error::InvalidParams(format!("eps_w must be nonnegative, got {eps_w}")));
    }
    let first = &path.steps[0];
    if eps_w <= path.eps_th {
        if path.eps_th == 0.0 {
            return Ok((first.policy.clone(), first.metrics));
        }
        return calibrated_low_regime_policy(eps_w, path.eps_th, stats, first.policy.space().clone());
    }
    let last = path.last();
    if last.metrics.w_s_bar <= eps_w {
        return Ok((last.policy.clone(), last.metrics));
    }
    let j = path.steps.iter().rposition(|s| s.metrics.w_s_bar <= eps_w).expect("first step is within budget");
    let next = &path.steps[j + 1];
    let state = next.chosen_state.expect("later path steps record their state");
    let index = next.policy.space().index(state).expect("chosen state in space");

    let mut policy = path.steps[j].policy.clone();
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut metrics = path.steps[j].metrics;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        policy.set_prob(index, mid);
        metrics = long_term_metrics(&policy, stats);
        let err = metrics.w_s_bar - eps_w;
        if err.abs() <= BLEND_TOLERANCE {
            break;
        }
        if err < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((policy, metrics))
}
