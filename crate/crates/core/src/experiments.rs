//! Parameter derivation, the comparison schemes and parameter sweeps.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{link_stats, optimize_rate, LinkStats, RateObjective, SystemParams};
use crate::error::{Error, Result};
use crate::mdp::{PolicyMetrics, StateSpace};
use crate::optimizer::{access_rate_budget, greedy_policy_path, optimal_policy, PolicyPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
#[value(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RatePolicy {
    /// SU rate in U-states maximizes the interfered throughput.
    RsuStar,
    /// SU uses the same rate in U- and K-states.
    RsuEqRsk,
    /// Rates are taken from the configuration as given.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scheme {
    FicBic,
    FicOnly,
    NoIc,
    PmKnown,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::FicBic, Scheme::FicOnly, Scheme::NoIc, Scheme::PmKnown];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::FicBic => "FIC_BIC",
            Scheme::FicOnly => "FIC_ONLY",
            Scheme::NoIc => "NO_IC",
            Scheme::PmKnown => "PM_KNOWN",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub params: SystemParams,
    pub rate_policy: RatePolicy,
    pub scheme: Scheme,
}

/// Fills in the rates of `params` according to `rate_policy`.
///
/// `R_p` and `R_sK` maximize the idle-SU PU throughput and the
/// interference-free SU throughput. `R_sU` then follows the rate policy.
pub fn derive_params(
    params: &SystemParams,
    rate_policy: RatePolicy,
    mc_samples: usize,
    seed: u64,
) -> Result<SystemParams> {
    let mut p = params.clone();
    if rate_policy != RatePolicy::Explicit {
        if !(p.mean_snr_p > 0.0 && p.mean_snr_s > 0.0) {
            return Err(Error::InvalidParams("rate derivation needs positive mean_snr_p and mean_snr_s".into()));
        }
        p.rate_p = optimize_rate(RateObjective::PuIdleThroughput, &p, mc_samples, seed);
        p.rate_sk = optimize_rate(RateObjective::SuCleanThroughput, &p, mc_samples, seed);
        p.rate_su = match rate_policy {
            RatePolicy::RsuStar => optimize_rate(RateObjective::SuInterferedThroughput, &p, mc_samples, seed),
            _ => p.rate_sk,
        };
    }
    p.validate()?;
    Ok(p)
}

/// Evaluates a scheme under the access budget `eps_w` given precomputed
/// link statistics. FIC/BIC uses a buffer of `D − 1`, FIC-only none.
pub fn evaluate_scheme(scheme: Scheme, stats: &LinkStats, deadline: usize, eps_w: f64) -> Result<PolicyMetrics> {
    let eps = eps_w.min(1.0);
    match scheme {
        Scheme::FicBic | Scheme::FicOnly => {
            let buffer = if scheme == Scheme::FicBic { deadline.saturating_sub(1) } else { 0 };
            let path = greedy_policy_path(stats, Arc::new(StateSpace::new(deadline, buffer)?))?;
            Ok(optimal_policy(eps_w, &path, stats)?.1)
        }
        Scheme::NoIc => Ok(PolicyMetrics::from_rates(stats.t_su * eps, eps, stats)),
        Scheme::PmKnown => Ok(PolicyMetrics::from_rates(stats.t_sk * eps, eps, stats)),
    }
}

/// Everything needed to act on one scenario.
#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    pub params: SystemParams,
    pub stats: LinkStats,
    pub eps_w: f64,
    pub eps_th: f64,
    pub low_regime: bool,
    pub policy: crate::mdp::Policy,
    pub metrics: PolicyMetrics,
    pub path: PolicyPath,
}

/// Optimal policy for fully specified parameters, at their own buffer size.
pub fn solve(params: &SystemParams, mc_samples: usize, seed: u64) -> Result<Solution> {
    params.validate()?;
    let stats = link_stats(params, mc_samples, seed);
    stats.validate()?;
    let eps_w = access_rate_budget(&stats, params.eps_pu, params.power_ratio);
    let space = Arc::new(StateSpace::new(params.deadline, params.buffer)?);
    let path = greedy_policy_path(&stats, space)?;
    let (policy, metrics) = optimal_policy(eps_w, &path, &stats)?;
    Ok(Solution {
        params: params.clone(),
        eps_th: path.eps_th,
        low_regime: eps_w <= path.eps_th,
        stats,
        eps_w,
        policy,
        metrics,
        path,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
#[value(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SweepKind {
    /// `x` is the access budget `ε_W`.
    TsVsTp,
    /// `x = γ̄_sp / γ̄_p`.
    GspRatio,
    /// `x = γ̄_ps / γ̄_s`.
    GpsRatio,
    /// `x = R_sU / R_sK` with `R_sK` derived.
    RsuRatio,
    /// `x` is the deadline `D`.
    Deadline,
}

impl SweepKind {
    /// Grid used when none is given.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepKind::TsVsTp => (0..=20).map(|i| i as f64 / 20.0).collect(),
            SweepKind::GspRatio => (0..=20).map(|i| i as f64 / 10.0).collect(),
            SweepKind::GpsRatio => (0..=32).map(|i| i as f64 / 8.0).collect(),
            SweepKind::RsuRatio => (1..=20).map(|i| i as f64 / 20.0).collect(),
            SweepKind::Deadline => (1..=8).map(f64::from).collect(),
        }
    }
}

/// One CSV row: a scheme's metrics at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub x: f64,
    pub scheme: Scheme,
    pub t_s_bar: f64,
    pub w_s_bar: f64,
    pub t_p_bar: f64,
    pub eps_w: f64,
    pub error: Option<String>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid("grid is empty".into()));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidGrid("grid values must be finite".into()));
    }
    let up = grid.windows(2).all(|w| w[1] > w[0]);
    let down = grid.windows(2).all(|w| w[1] < w[0]);
    if !(up || down) {
        return Err(Error::InvalidGrid("grid must be strictly monotone".into()));
    }
    Ok(())
}

/// Parameters and access budget of one grid point. For the ε_W sweep the
/// statistics are shared, so they are passed in.
fn point(
    kind: SweepKind,
    base: &SystemParams,
    rate_policy: RatePolicy,
    x: f64,
    mc_samples: usize,
    seed: u64,
    shared: Option<&LinkStats>,
) -> Result<(LinkStats, usize, f64)> {
    let mut p = base.clone();
    match kind {
        SweepKind::TsVsTp => {
            let stats = shared.expect("shared statistics for the access-rate sweep");
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::InvalidParams(format!("access budget {x} outside [0, 1]")));
            }
            return Ok((stats.clone(), p.deadline, x));
        }
        SweepKind::GspRatio => p.mean_snr_sp = x * p.mean_snr_p,
        SweepKind::GpsRatio => p.mean_snr_ps = x * p.mean_snr_s,
        SweepKind::RsuRatio => {}
        SweepKind::Deadline => {
            if x < 1.0 || x.fract() != 0.0 {
                return Err(Error::InvalidParams(format!("deadline {x} is not a positive integer")));
            }
            p.deadline = x as usize;
            p.buffer = p.deadline - 1;
        }
    }
    if p.mean_snr_sp < 0.0 || p.mean_snr_ps < 0.0 {
        return Err(Error::InvalidParams(format!("ratio {x} gives a negative SNR")));
    }
    let mut p = derive_params(&p, rate_policy, mc_samples, seed)?;
    if kind == SweepKind::RsuRatio {
        p.rate_su = x * p.rate_sk;
        p.validate()?;
    }
    let stats = link_stats(&p, mc_samples, seed);
    stats.validate()?;
    let eps_w = access_rate_budget(&stats, p.eps_pu, p.power_ratio);
    Ok((stats, p.deadline, eps_w))
}

/// Runs all four schemes at every grid point. Grid points are evaluated in
/// parallel; rows come back in grid order. A failing point yields rows with
/// the error recorded and NaN metrics.
pub fn sweep(
    kind: SweepKind,
    base: &SystemParams,
    rate_policy: RatePolicy,
    grid: &[f64],
    mc_samples: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    check_grid(grid)?;
    let shared = if kind == SweepKind::TsVsTp {
        let p = derive_params(base, rate_policy, mc_samples, seed)?;
        Some(link_stats(&p, mc_samples, seed))
    } else {
        None
    };
    let rows: Vec<Vec<SweepRow>> = grid
        .par_iter()
        .map(|&x| {
            let evaluated = point(kind, base, rate_policy, x, mc_samples, seed, shared.as_ref());
            Scheme::ALL
                .iter()
                .map(|&scheme| {
                    let outcome = evaluated.as_ref().map_err(|e| e.to_string()).and_then(|(stats, d, eps)| {
                        evaluate_scheme(scheme, stats, *d, *eps).map(|m| (m, *eps)).map_err(|e| e.to_string())
                    });
                    match outcome {
                        Ok((m, eps_w)) => SweepRow {
                            x,
                            scheme,
                            t_s_bar: m.t_s_bar,
                            w_s_bar: m.w_s_bar,
                            t_p_bar: m.t_p_bar,
                            eps_w,
                            error: None,
                        },
                        Err(e) => SweepRow {
                            x,
                            scheme,
                            t_s_bar: f64::NAN,
                            w_s_bar: f64::NAN,
                            t_p_bar: f64::NAN,
                            eps_w: f64::NAN,
                            error: Some(e),
                        },
                    }
                })
                .collect()
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

/// Writes rows with the header `x,scheme,t_s_bar,w_s_bar,t_p_bar,eps_w,error`.
pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
