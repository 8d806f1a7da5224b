//! Slot-level Monte-Carlo simulation of the PU ARQ process and the SU
//! receiver with forward and backward interference cancellation.
//!
//! Each slot draws `(γ_s, γ_p, γ_sp, γ_ps)` and then the SU action, in that
//! order, from one ChaCha8 generator seeded with `seed`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::channel::{snr_threshold, LinkStats, Region, RegionClassifier, SystemParams};
use crate::error::{Error, Result};
use crate::mdp::{mixed_transition_row, transition_row, Action, Knowledge, NetState, Policy};

pub const BATCHES: usize = 20;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub params: SystemParams,
    pub policy: Policy,
    pub num_slots: u64,
    pub seed: u64,
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.num_slots == 0 {
            return Err(Error::InvalidParams("num_slots must be at least 1".into()));
        }
        let space = self.policy.space();
        if space.deadline() != self.params.deadline || space.buffer() != self.params.buffer {
            return Err(Error::InvalidPolicy(format!(
                "policy is for D = {}, B = {} but the parameters have D = {}, B = {}",
                space.deadline(),
                space.buffer(),
                self.params.deadline,
                self.params.buffer
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub slots: u64,
    pub t_s_emp: f64,
    pub t_s_stderr: f64,
    pub w_s_emp: f64,
    pub w_s_stderr: f64,
    pub t_p_emp: f64,
    pub t_p_stderr: f64,
    /// Bits decoded in U-states directly, under PU interference.
    pub plain_bits: f64,
    /// Bits decoded in K-states after cancelling the known PU message.
    pub fic_bits: f64,
    /// Buffered bits recovered once the PU message was decoded.
    pub bic_bits: f64,
    pub u_accesses: u64,
    pub k_accesses: u64,
    pub buffered_events: u64,
    pub cycles_completed: u64,
}

/// Per-slot outcome handed to an observer.
struct Step {
    from: NetState,
    action: Action,
    to: NetState,
}

struct Totals {
    su_bits: f64,
    accesses: f64,
    pu_bits: f64,
}

fn simulate(config: &SimConfig, mut observe: impl FnMut(&Step)) -> Result<SimResult> {
    config.validate()?;
    let p = &config.params;
    let classifier = RegionClassifier::new(p.rate_su, p.rate_p);
    let theta_p = snr_threshold(p.rate_p);
    let theta_sk = snr_threshold(p.rate_sk);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let n = config.num_slots;
    let batches = (BATCHES as u64).min(n);
    let mut batch_means: Vec<[f64; 3]> = Vec::with_capacity(batches as usize);
    let mut batch = Totals { su_bits: 0.0, accesses: 0.0, pu_bits: 0.0 };
    let mut batch_start = 0u64;
    let batch_end = |k: u64| (k + 1) * n / batches;
    let mut result = SimResult {
        slots: n,
        t_s_emp: 0.0,
        t_s_stderr: 0.0,
        w_s_emp: 0.0,
        w_s_stderr: 0.0,
        t_p_emp: 0.0,
        t_p_stderr: 0.0,
        plain_bits: 0.0,
        fic_bits: 0.0,
        bic_bits: 0.0,
        u_accesses: 0,
        k_accesses: 0,
        buffered_events: 0,
        cycles_completed: 0,
    };

    let mut state = NetState::START;
    for slot in 0..n {
        let mut exp = || -> f64 { Exp1.sample(&mut rng) };
        let (g_s, g_p, g_sp, g_ps) =
            (p.mean_snr_s * exp(), p.mean_snr_p * exp(), p.mean_snr_sp * exp(), p.mean_snr_ps * exp());
        let mu = config.policy.prob(state).expect("simulated state lies in the state space");
        let active = rng.random::<f64>() < mu;

        let interference = if active { g_sp } else { 0.0 };
        let pu_ack = g_p / (1.0 + interference) >= theta_p;
        let mut su_bits = 0.0;
        let mut next_b = state.b;
        let mut learned = false;
        match (state.phi, active) {
            (Knowledge::K, true) => {
                result.k_accesses += 1;
                if g_s >= theta_sk {
                    su_bits += p.rate_sk;
                    result.fic_bits += p.rate_sk;
                }
            }
            (Knowledge::K, false) => {}
            (Knowledge::U, false) => learned = g_ps >= theta_p,
            (Knowledge::U, true) => {
                result.u_accesses += 1;
                let region = classifier.classify(g_s, g_ps);
                if region.su_decoded() {
                    su_bits += p.rate_su;
                    result.plain_bits += p.rate_su;
                }
                learned = region.pu_decoded();
                if region == Region::Buffered {
                    result.buffered_events += 1;
                    next_b = (state.b + 1).min(p.buffer);
                }
            }
        }
        if learned {
            let recovered = state.b as f64 * p.rate_su;
            su_bits += recovered;
            result.bic_bits += recovered;
        }

        let next = if pu_ack || state.t == p.deadline {
            result.cycles_completed += 1;
            NetState::START
        } else if state.phi == Knowledge::K || learned {
            NetState::known(state.t + 1)
        } else {
            NetState::unknown(state.t + 1, next_b)
        };
        observe(&Step { from: state, action: if active { Action::Active } else { Action::Idle }, to: next });
        state = next;

        batch.su_bits += su_bits;
        batch.accesses += f64::from(u8::from(active));
        batch.pu_bits += if pu_ack { p.rate_p } else { 0.0 };
        if slot + 1 == batch_end(batch_means.len() as u64) {
            let len = (slot + 1 - batch_start) as f64;
            batch_means.push([batch.su_bits / len, batch.accesses / len, batch.pu_bits / len]);
            result.t_s_emp += batch.su_bits;
            result.w_s_emp += batch.accesses;
            result.t_p_emp += batch.pu_bits;
            batch = Totals { su_bits: 0.0, accesses: 0.0, pu_bits: 0.0 };
            batch_start = slot + 1;
        }
    }
    result.t_s_emp /= n as f64;
    result.w_s_emp /= n as f64;
    result.t_p_emp /= n as f64;
    let k = batch_means.len() as f64;
    let stderr = |c: usize, mean: f64| {
        if batch_means.len() < 2 {
            return f64::NAN;
        }
        let var = batch_means.iter().map(|m| (m[c] - mean).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    };
    result.t_s_stderr = stderr(0, result.t_s_emp);
    result.w_s_stderr = stderr(1, result.w_s_emp);
    result.t_p_stderr = stderr(2, result.t_p_emp);
    Ok(result)
}

/// Simulates `num_slots` slots and returns time averages with batch-means
/// standard errors.
pub fn run(config: &SimConfig) -> Result<SimResult> {
    simulate(config, |_| {})
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionRowCheck {
    pub state: NetState,
    pub action: Action,
    pub visits: u64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionCheck {
    pub max_abs_error: f64,
    pub rows: Vec<TransitionRowCheck>,
    /// Largest deviation of the policy-averaged rows from their mixtures.
    pub mixed_max_abs_error: f64,
}

/// Compares empirical one-step transition frequencies, conditioned on state
/// and action, with the analytic transition rows computed from `stats`.
pub fn empirical_transition_check(config: &SimConfig, stats: &LinkStats) -> Result<TransitionCheck> {
    let space = config.policy.space().clone();
    let n = space.len();
    // counts[(from * 2 + action) * n + to]
    let mut counts = vec![0u64; n * 2 * n];
    simulate(config, |step| {
        let from = space.index(step.from).unwrap();
        let to = space.index(step.to).unwrap();
        let a = usize::from(step.action == Action::Idle);
        counts[(from * 2 + a) * n + to] += 1;
    })?;

    let mut rows = Vec::new();
    let mut mixed_max: f64 = 0.0;
    for (i, &s) in space.states().iter().enumerate() {
        let mut mixed_counts = vec![0u64; n];
        for (a, action) in [Action::Active, Action::Idle].into_iter().enumerate() {
            let slice = &counts[(i * 2 + a) * n..(i * 2 + a + 1) * n];
            for (m, c) in mixed_counts.iter_mut().zip(slice) {
                *m += c;
            }
            let visits: u64 = slice.iter().sum();
            if visits == 0 {
                continue;
            }
            let mut expected = vec![0.0; n];
            for (next, p) in transition_row(s, action, stats, &space) {
                expected[space.index(next).unwrap()] += p;
            }
            let err =
                slice.iter().zip(&expected).map(|(&c, &e)| (c as f64 / visits as f64 - e).abs()).fold(0.0, f64::max);
            rows.push(TransitionRowCheck { state: s, action, visits, max_abs_error: err });
        }
        let visits: u64 = mixed_counts.iter().sum();
        if visits > 0 {
            let mut expected = vec![0.0; n];
            for (next, p) in mixed_transition_row(s, config.policy.prob_at(i), stats, &space) {
                expected[space.index(next).unwrap()] += p;
            }
            for (c, e) in mixed_counts.iter().zip(&expected) {
                mixed_max = mixed_max.max((*c as f64 / visits as f64 - e).abs());
            }
        }
    }
    let max_abs_error = rows.iter().map(|r| r.max_abs_error).fold(0.0, f64::max);
    Ok(TransitionCheck { max_abs_error, rows, mixed_max_abs_error: mixed_max })
}
