//! Closed forms for the degenerate network, where the SU never interferes
//! with the PU receiver (`q_pp^(A) = q_pp^(I)`).
//!
//! When the FIC gain `Δ_s` is small enough, every policy on the greedy path
//! is active in all K-states and, in each ARQ state `t`, active exactly in
//! the U-states with fewest buffered receptions. The number of active buffer
//! levels per `t` is nonincreasing in `t` and known in closed form.

use std::sync::Arc;

use serde::Serialize;

use crate::channel::LinkStats;
use crate::error::{Error, Result};
use crate::mdp::{Knowledge, NetState, Policy, StateSpace};

/// Largest `|q_pp^(A) − q_pp^(I)|` still treated as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-12;

/// `Σ_{k=0}^{n-1} x^k`.
fn geometric_sum(x: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else if (1.0 - x).abs() < 1e-12 {
        n as f64
    } else {
        (1.0 - x.powi(n as i32)) / (1.0 - x)
    }
}

/// `(A_0(τ), A_1(τ))`: expected numbers of remaining slots `τ..=D` in which
/// the PU message is still unknown at SUrx (idle SU), resp. still being
/// retransmitted.
pub fn a0_a1(tau: usize, q_pp: f64, q_ps_idle: f64, deadline: usize) -> (f64, f64) {
    assert!((1..=deadline + 1).contains(&tau), "tau = {tau} outside 1..={}", deadline + 1);
    let n = deadline + 1 - tau;
    (geometric_sum(q_pp * q_ps_idle, n), geometric_sum(q_pp, n))
}

/// Common PU outage of a degenerate network.
pub fn degenerate_q_pp(stats: &LinkStats) -> Result<f64> {
    let gap = (stats.q_pp_active - stats.q_pp_idle).abs();
    if gap > DEGENERACY_TOLERANCE {
        return Err(Error::NotDegenerate(gap));
    }
    Ok(stats.q_pp_idle)
}

/// Normalized throughput gain of a K-state access over a U-state access
/// (including the BIC potential of the buffered signal).
pub fn delta_s(stats: &LinkStats) -> f64 {
    (stats.t_sk - stats.t_su - stats.p_buf * stats.rate_su) / stats.rate_su
}

pub fn hp_bound(stats: &LinkStats) -> f64 {
    (1.0 - stats.q_ps_active) / (stats.q_ps_active - stats.q_ps_idle) * stats.p_buf
}

/// Sufficient condition for the threshold structure: `Δ_s` below
/// [`hp_bound`]. Evaluated as `Δ_s·(q_A − q_I) < (1 − q_A)·p_buf`, which
/// avoids dividing by a vanishing gap.
pub fn hp_condition(stats: &LinkStats) -> bool {
    delta_s(stats) * (stats.q_ps_active - stats.q_ps_idle) < (1.0 - stats.q_ps_active) * stats.p_buf
}

/// The buffer occupancy `x` at which the access gain `G′(t, b, U)` of a
/// threshold policy changes sign: idle U-states with `b < x` have positive
/// efficiency.
pub fn b_max_ratio(t: usize, stats: &LinkStats, deadline: usize) -> Result<f64> {
    let q_pp = degenerate_q_pp(stats)?;
    let (qa, qi) = (stats.q_ps_active, stats.q_ps_idle);
    let (a0, _) = a0_a1(t + 1, q_pp, qi, deadline);
    let numerator = stats.t_su / stats.rate_su * (1.0 - q_pp * (qa - qi) * a0)
        + (hp_bound(stats) - delta_s(stats)) * q_pp * (qa - qi) * a0;
    let denominator = (qa - qi) * (1.0 - q_pp * (1.0 - qi) * a0);
    Ok(numerator / denominator)
}

/// `⌈x⌉ − 1` for the ratio of [`b_max_ratio`], unclamped: the largest buffer
/// occupancy at which a U-state in ARQ state `t` is worth accessing.
/// Negative when no U-state in `t` is worth accessing.
pub fn b_max(t: usize, stats: &LinkStats, deadline: usize) -> Result<i64> {
    Ok(b_max_ratio(t, stats, deadline)?.ceil() as i64 - 1)
}

/// `b_max(t)` clamped to the buffer levels that exist in ARQ state `t`;
/// `-1` means the SU stays idle in every U-state with that `t`.
pub fn clamped_b_max(t: usize, stats: &LinkStats, space: &StateSpace) -> Result<i64> {
    let top = (t - 1).min(space.buffer()) as i64;
    Ok(b_max(t, stats, space.deadline())?.clamp(-1, top))
}

/// Unconstrained optimum: all K-states active and `(t, b, U)` active iff
/// `b ≤ b_max(t)`.
pub fn unconstrained_optimal(stats: &LinkStats, space: Arc<StateSpace>) -> Result<Policy> {
    let limits = (1..=space.deadline()).map(|t| b_max(t, stats, space.deadline())).collect::<Result<Vec<_>>>()?;
    Policy::from_fn(space, |s| match s.phi {
        Knowledge::K => 1.0,
        Knowledge::U => f64::from(u8::from((s.b as i64) <= limits[s.t - 1])),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegenerateParams {
    pub q_pp: f64,
    pub delta_s: f64,
    pub hp_bound: f64,
    pub hp_condition: bool,
    /// `b_max(t)` for `t = 1..=D`.
    pub b_max: Vec<i64>,
    pub b_max_ratio: Vec<f64>,
}

pub fn degenerate_params(stats: &LinkStats, deadline: usize) -> Result<DegenerateParams> {
    let q_pp = degenerate_q_pp(stats)?;
    let ratios = (1..=deadline).map(|t| b_max_ratio(t, stats, deadline)).collect::<Result<Vec<_>>>()?;
    Ok(DegenerateParams {
        q_pp,
        delta_s: delta_s(stats),
        hp_bound: hp_bound(stats),
        hp_condition: hp_condition(stats),
        b_max: ratios.iter().map(|x| x.ceil() as i64 - 1).collect(),
        b_max_ratio: ratios,
    })
}

/// Number of active buffer levels per ARQ state, if the policy is
/// deterministic, active in every K-state and active in `(t, b, U)` exactly
/// for `b` below a per-`t` threshold.
pub fn threshold_structure(policy: &Policy) -> Option<Vec<usize>> {
    let space = policy.space();
    if !policy.is_deterministic() {
        return None;
    }
    if space.k_states().iter().any(|&s| policy.prob(s) != Some(1.0)) {
        return None;
    }
    let mut thresholds = Vec::with_capacity(space.deadline());
    for t in 1..=space.deadline() {
        let levels = (t - 1).min(space.buffer()) + 1;
        let active: Vec<bool> = (0..levels).map(|b| policy.prob(NetState::unknown(t, b)) == Some(1.0)).collect();
        let count = active.iter().take_while(|&&a| a).count();
        if active[count..].iter().any(|&a| a) {
            return None;
        }
        thresholds.push(count);
    }
    Some(thresholds)
}

/// Smallest nonincreasing thresholds `b(t)` such that `(t, b, U)` is active
/// iff `b < b(t)`, given per-`t` active counts from [`threshold_structure`].
///
/// A fully active ARQ state only bounds its threshold from below, since no
/// buffer level beyond `min(t − 1, B)` exists. Returns `None` when no
/// nonincreasing choice exists.
pub fn monotone_thresholds(counts: &[usize], space: &StateSpace) -> Option<Vec<usize>> {
    let mut thresholds = vec![0; counts.len()];
    let mut floor = 0;
    for t in (1..=counts.len()).rev() {
        let levels = (t - 1).min(space.buffer()) + 1;
        let c = counts[t - 1];
        thresholds[t - 1] = if c == levels {
            c.max(floor)
        } else if c >= floor {
            c
        } else {
            return None;
        };
        floor = thresholds[t - 1];
    }
    Some(thresholds)
}

/// Closed-form `(G, V)` under a threshold policy, valid for K-states and for
/// idle U-states whose downstream states with at least as many buffered
/// receptions are idle too.
pub fn closed_form_values(state: NetState, stats: &LinkStats, deadline: usize) -> Result<(f64, f64)> {
    let q_pp = degenerate_q_pp(stats)?;
    let (a0, a1) = a0_a1(state.t, q_pp, stats.q_ps_idle, deadline);
    Ok(match state.phi {
        Knowledge::K => (stats.t_sk * a1, a1),
        Knowledge::U => {
            let g = (1.0 - stats.q_ps_idle) * state.b as f64 * stats.rate_su * a0 + stats.t_sk * (a1 - a0);
            (g, a1 - a0)
        }
    })
}

/// Closed-form `(G′, V′)` for an idle U-state of a threshold policy.
pub fn closed_form_derivatives(t: usize, b: usize, stats: &LinkStats, deadline: usize) -> Result<(f64, f64)> {
    let q_pp = degenerate_q_pp(stats)?;
    let (qa, qi) = (stats.q_ps_active, stats.q_ps_idle);
    let (a0, _) = a0_a1(t + 1, q_pp, qi, deadline);
    let r = stats.rate_su;
    let g = stats.t_su
        + q_pp * stats.p_buf * (1.0 - qi) * r * a0
        + (qi - qa) * b as f64 * r * (1.0 - q_pp * (1.0 - qi) * a0)
        + q_pp * (qi - qa) * stats.t_sk * a0;
    let v = 1.0 - q_pp * (qa - qi) * a0;
    Ok((g, v))
}
