//! Scenario generators shared by the integration and acceptance tests.
#![allow(dead_code)]

use harq_ic::channel::{link_stats, optimize_rate, LinkStats, RateObjective, SystemParams};
use harq_ic::mdp::{Policy, StateSpace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Monte-Carlo samples for randomized scenarios: enough for consistent
/// statistics, the exact values do not matter.
pub const SCENARIO_MC: usize = 20_000;

/// Random physical parameters; `interfering = false` zeroes the SU→PU link.
///
/// `R_sK` maximizes the interference-free SU throughput, as in every real
/// scenario, which keeps `T_sU ≤ T_sK` for any `R_sU`. `R_p` and `R_sU` are
/// drawn freely.
pub fn random_params(rng: &mut impl Rng, deadline: usize, buffer: usize, interfering: bool) -> SystemParams {
    let mut p = SystemParams {
        mean_snr_s: rng.random_range(1.0..12.0),
        mean_snr_p: rng.random_range(2.0..15.0),
        mean_snr_sp: if interfering { rng.random_range(0.2..6.0) } else { 0.0 },
        mean_snr_ps: rng.random_range(0.5..10.0),
        rate_p: rng.random_range(0.5..3.5),
        rate_su: rng.random_range(0.2..1.0),
        rate_sk: 1.0,
        deadline,
        buffer,
        eps_pu: rng.random_range(0.05..0.5),
        power_ratio: 1.0,
    };
    p.rate_sk = optimize_rate(RateObjective::SuCleanThroughput, &p, 1, 0);
    p.rate_su *= p.rate_sk;
    p
}

pub fn random_stats(seed: u64, deadline: usize, buffer: usize, interfering: bool) -> LinkStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = random_params(&mut rng, deadline, buffer, interfering);
    link_stats(&params, SCENARIO_MC, seed)
}

pub fn space(deadline: usize, buffer: usize) -> Arc<StateSpace> {
    Arc::new(StateSpace::new(deadline, buffer).unwrap())
}

/// Policy with independent uniform access probabilities; about a quarter of
/// the states are snapped to 0 or 1.
pub fn random_policy(rng: &mut impl Rng, space: Arc<StateSpace>) -> Policy {
    Policy::from_fn(space, |_| match rng.random_range(0..8) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.random_range(0.0..=1.0),
    })
    .unwrap()
}
