//! Rayleigh-fading link model for the primary/secondary pair.
//!
//! Single-variable outages (PU link with and without SU interference, PU
//! decoding at SUrx while the SU is idle, interference-free SU link) use
//! their exponential closed forms. The joint-decoding regions at SUrx are
//! two-dimensional with piecewise boundaries, so their probabilities are
//! estimated by Monte Carlo with a reported standard error.
//!
//! Monte-Carlo samples are drawn in chunks of [`MC_CHUNK`] pairs. Chunk `i`
//! uses a ChaCha8 generator seeded with the caller's seed and switched to
//! stream `i`, so the estimate is a deterministic function of
//! `(params, samples, seed)` however the chunks are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of `(γ_s, γ_ps)` pairs drawn per generator stream.
pub const MC_CHUNK: usize = 1 << 16;

/// Default Monte-Carlo sample count for region probabilities.
pub const DEFAULT_MC_SAMPLES: usize = 10_000_000;

/// Rate search bracket and tolerance, bits/s/Hz.
pub const RATE_BRACKET: (f64, f64) = (1e-3, 20.0);
pub const RATE_TOLERANCE: f64 = 1e-4;

/// Normalized Gaussian capacity `log2(1 + snr)`.
pub fn capacity(snr: f64) -> f64 {
    (1.0 + snr).log2()
}

/// Smallest SNR supporting `rate`, i.e. `rate <= C(snr)` iff `snr >= 2^rate - 1`.
pub fn snr_threshold(rate: f64) -> f64 {
    rate.exp2() - 1.0
}

/// Probability that an exponential SNR with the given mean supports `rate`.
fn success_probability(rate: f64, mean_snr: f64) -> f64 {
    if mean_snr <= 0.0 {
        return if rate <= 0.0 { 1.0 } else { 0.0 };
    }
    (-snr_threshold(rate) / mean_snr).exp()
}

/// `rate * Pr(rate <= C(γ))` for an interference-free Rayleigh link.
pub fn single_link_throughput(rate: f64, mean_snr: f64) -> f64 {
    rate * success_probability(rate, mean_snr)
}

/// Exogenous system parameters. SNRs are linear, rates in bits/s/Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub mean_snr_s: f64,
    pub mean_snr_p: f64,
    pub mean_snr_sp: f64,
    pub mean_snr_ps: f64,
    #[serde(default)]
    pub rate_p: f64,
    #[serde(default)]
    pub rate_su: f64,
    #[serde(default)]
    pub rate_sk: f64,
    #[serde(rename = "deadline_D")]
    pub deadline: usize,
    #[serde(rename = "buffer_B")]
    pub buffer: usize,
    pub eps_pu: f64,
    pub power_ratio: f64,
}

impl SystemParams {
    /// Reference scenario: γ̄_s = γ̄_ps = 5, γ̄_p = 10, γ̄_sp = 2, D = 5 with a
    /// full buffer, ε_PU = 0.2 and an inactive power constraint. Rates are
    /// the rounded throughput-maximizing values; use
    /// [`crate::experiments::derive_params`] to recompute them.
    pub fn reference() -> Self {
        Self {
            mean_snr_s: 5.0,
            mean_snr_p: 10.0,
            mean_snr_sp: 2.0,
            mean_snr_ps: 5.0,
            rate_p: 2.52,
            rate_su: 1.12,
            rate_sk: 1.91,
            deadline: 5,
            buffer: 4,
            eps_pu: 0.2,
            power_ratio: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let snrs = [
            ("mean_snr_s", self.mean_snr_s),
            ("mean_snr_p", self.mean_snr_p),
            ("mean_snr_sp", self.mean_snr_sp),
            ("mean_snr_ps", self.mean_snr_ps),
        ];
        for (name, v) in snrs {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be a finite nonnegative SNR, got {v}")));
            }
        }
        let rates = [("rate_p", self.rate_p), ("rate_su", self.rate_su), ("rate_sk", self.rate_sk)];
        for (name, v) in rates {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be a positive rate, got {v}")));
            }
        }
        if self.deadline == 0 {
            return Err(Error::InvalidParams("deadline_D must be at least 1".into()));
        }
        if self.buffer > self.deadline - 1 {
            return Err(Error::InvalidParams(format!(
                "buffer_B = {} exceeds deadline_D - 1 = {}",
                self.buffer,
                self.deadline - 1
            )));
        }
        for (name, v) in [("eps_pu", self.eps_pu), ("power_ratio", self.power_ratio)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParams(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Fading-averaged probabilities and per-slot throughputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkStats {
    pub q_pp_idle: f64,
    pub q_pp_active: f64,
    pub q_ps_idle: f64,
    pub q_ps_active: f64,
    pub p_buf: f64,
    pub t_su: f64,
    pub t_sk: f64,
    pub t_p_idle: f64,
    pub t_p_active: f64,
    /// Rate of each buffered SU packet recovered by backward cancellation.
    pub rate_su: f64,
    #[serde(default)]
    pub stderr_q_ps_active: f64,
    #[serde(default)]
    pub stderr_p_buf: f64,
    #[serde(default)]
    pub stderr_t_su: f64,
}

impl LinkStats {
    /// Checks that every probability is in `[0, 1]`, throughputs are
    /// nonnegative and the transition masses built from these values are
    /// nonnegative.
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("q_pp_idle", self.q_pp_idle),
            ("q_pp_active", self.q_pp_active),
            ("q_ps_idle", self.q_ps_idle),
            ("q_ps_active", self.q_ps_active),
            ("p_buf", self.p_buf),
        ];
        for (name, v) in probs {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParams(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.p_buf > self.q_ps_active {
            return Err(Error::InvalidParams(format!(
                "p_buf = {} exceeds q_ps_active = {}",
                self.p_buf, self.q_ps_active
            )));
        }
        let rates = [
            ("t_su", self.t_su),
            ("t_sk", self.t_sk),
            ("t_p_idle", self.t_p_idle),
            ("t_p_active", self.t_p_active),
            ("rate_su", self.rate_su),
        ];
        for (name, v) in rates {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn is_degenerate(&self) -> bool {
        (self.q_pp_active - self.q_pp_idle).abs() <= crate::degenerate::DEGENERACY_TOLERANCE
    }
}

/// PU outage at PUrx, idle (`su_active = false`) or interfered by the SU.
pub fn outage_pp(params: &SystemParams, su_active: bool) -> f64 {
    if params.mean_snr_p <= 0.0 {
        return 1.0;
    }
    let theta = snr_threshold(params.rate_p);
    let clean = (-theta / params.mean_snr_p).exp();
    if su_active {
        1.0 - clean / (1.0 + theta * params.mean_snr_sp / params.mean_snr_p)
    } else {
        1.0 - clean
    }
}

/// Joint-decoding outcome at SUrx when the SU transmits under PU interference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Region {
    /// Both messages decoded (inside the MAC region).
    BothDecoded,
    /// PU message decoded treating the SU as noise; SU message lost.
    PuOnly,
    /// SU message decoded treating the PU as noise; PU message unknown.
    SuOnly,
    /// Neither decoded, but the SU rate fits the interference-free link:
    /// the received signal is buffered for backward cancellation.
    Buffered,
    Lost,
}

impl Region {
    pub fn pu_decoded(self) -> bool {
        matches!(self, Region::BothDecoded | Region::PuOnly)
    }

    pub fn su_decoded(self) -> bool {
        matches!(self, Region::BothDecoded | Region::SuOnly)
    }
}

/// Precomputed SNR thresholds for classifying `(γ_s, γ_ps)` pairs.
///
/// Every capacity predicate `R <= C(x)` is evaluated as `x >= 2^R - 1`.
/// Boundaries are inclusive, matching the `<=` of the region definitions.
#[derive(Debug, Clone, Copy)]
pub struct RegionClassifier {
    theta_su: f64,
    theta_p: f64,
    theta_sum: f64,
}

impl RegionClassifier {
    pub fn new(rate_su: f64, rate_p: f64) -> Self {
        Self {
            theta_su: snr_threshold(rate_su),
            theta_p: snr_threshold(rate_p),
            theta_sum: snr_threshold(rate_su + rate_p),
        }
    }

    pub fn classify(&self, snr_s: f64, snr_ps: f64) -> Region {
        let su_alone = snr_s >= self.theta_su;
        let pu_alone = snr_ps >= self.theta_p;
        let joint = su_alone && pu_alone && snr_s + snr_ps >= self.theta_sum;
        // R_p <= C(γ_ps / (1 + γ_s)) with the SU undecodable
        let pu_over_su = !su_alone && snr_ps >= self.theta_p * (1.0 + snr_s);
        // R_sU <= C(γ_s / (1 + γ_ps)) with the PU undecodable
        let su_over_pu = !pu_alone && snr_s >= self.theta_su * (1.0 + snr_ps);
        let in_p = joint || pu_over_su;
        let in_s = joint || su_over_pu;
        match (in_p, in_s) {
            (true, true) => Region::BothDecoded,
            (true, false) => Region::PuOnly,
            (false, true) => Region::SuOnly,
            (false, false) if su_alone => Region::Buffered,
            (false, false) => Region::Lost,
        }
    }
}

/// Classifies one SNR pair. See [`RegionClassifier`] for repeated use.
pub fn region_membership(snr_s: f64, snr_ps: f64, rate_su: f64, rate_p: f64) -> Region {
    RegionClassifier::new(rate_su, rate_p).classify(snr_s, snr_ps)
}

#[derive(Debug, Default, Clone, Copy)]
struct RegionCounts {
    samples: u64,
    outside_p: u64,
    buffered: u64,
    in_s: u64,
}

impl RegionCounts {
    fn merge(self, other: Self) -> Self {
        Self {
            samples: self.samples + other.samples,
            outside_p: self.outside_p + other.outside_p,
            buffered: self.buffered + other.buffered,
            in_s: self.in_s + other.in_s,
        }
    }
}

fn count_regions(params: &SystemParams, rate_su: f64, samples: usize, seed: u64) -> RegionCounts {
    let classifier = RegionClassifier::new(rate_su, params.rate_p);
    let (mean_s, mean_ps) = (params.mean_snr_s, params.mean_snr_ps);
    let chunks = samples.div_ceil(MC_CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let n = MC_CHUNK.min(samples - chunk * MC_CHUNK);
            let mut counts = RegionCounts { samples: n as u64, ..Default::default() };
            for _ in 0..n {
                let e_s: f64 = Exp1.sample(&mut rng);
                let e_ps: f64 = Exp1.sample(&mut rng);
                let region = classifier.classify(mean_s * e_s, mean_ps * e_ps);
                counts.outside_p += u64::from(!region.pu_decoded());
                counts.buffered += u64::from(region == Region::Buffered);
                counts.in_s += u64::from(region.su_decoded());
            }
            counts
        })
        .reduce(RegionCounts::default, RegionCounts::merge)
}

fn binomial_stderr(hits: u64, n: u64) -> f64 {
    let p = hits as f64 / n as f64;
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Estimates `T_sU(rate_su, R_p)` with its standard error.
pub fn interfered_su_throughput(params: &SystemParams, rate_su: f64, mc_samples: usize, seed: u64) -> (f64, f64) {
    if params.mean_snr_ps == 0.0 {
        // PU never decodable at SUrx: the SU-only region is the single-link outage
        return (single_link_throughput(rate_su, params.mean_snr_s), 0.0);
    }
    let counts = count_regions(params, rate_su, mc_samples, seed);
    let p = counts.in_s as f64 / counts.samples as f64;
    (rate_su * p, rate_su * binomial_stderr(counts.in_s, counts.samples))
}

/// Computes all link statistics for `params` (rates must already be set).
///
/// Panics if `mc_samples` is zero.
pub fn link_stats(params: &SystemParams, mc_samples: usize, seed: u64) -> LinkStats {
    assert!(mc_samples > 0, "link_stats needs at least one Monte-Carlo sample");
    let q_pp_idle = outage_pp(params, false);
    let q_pp_active = outage_pp(params, true);
    let q_ps_idle = 1.0 - success_probability(params.rate_p, params.mean_snr_ps);

    let (q_ps_active, p_buf, t_su, se_q, se_buf, se_t) = if params.mean_snr_ps == 0.0 {
        (1.0, 0.0, single_link_throughput(params.rate_su, params.mean_snr_s), 0.0, 0.0, 0.0)
    } else {
        let c = count_regions(params, params.rate_su, mc_samples, seed);
        let n = c.samples as f64;
        (
            c.outside_p as f64 / n,
            c.buffered as f64 / n,
            params.rate_su * c.in_s as f64 / n,
            binomial_stderr(c.outside_p, c.samples),
            binomial_stderr(c.buffered, c.samples),
            params.rate_su * binomial_stderr(c.in_s, c.samples),
        )
    };

    LinkStats {
        q_pp_idle,
        q_pp_active,
        q_ps_idle,
        q_ps_active,
        p_buf,
        t_su,
        t_sk: single_link_throughput(params.rate_sk, params.mean_snr_s),
        t_p_idle: params.rate_p * (1.0 - q_pp_idle),
        t_p_active: params.rate_p * (1.0 - q_pp_active),
        rate_su: params.rate_su,
        stderr_q_ps_active: se_q,
        stderr_p_buf: se_buf,
        stderr_t_su: se_t,
    }
}

/// Golden-section search for the maximizer of a unimodal `f` on `[lo, hi]`.
pub fn golden_section_max(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RateObjective {
    /// `R_p = argmax T_p^(I)(R)`
    PuIdleThroughput,
    /// `R_sK = argmax T_sK(R)`
    SuCleanThroughput,
    /// `R_sU* = argmax T_sU(R, R_p)`, using `params.rate_p`.
    SuInterferedThroughput,
}

/// Throughput-maximizing rate for the chosen objective.
///
/// The interfered objective re-uses `seed` for every evaluation so that the
/// search runs on a fixed set of fading samples.
pub fn optimize_rate(objective: RateObjective, params: &SystemParams, mc_samples: usize, seed: u64) -> f64 {
    let (lo, hi) = RATE_BRACKET;
    match objective {
        RateObjective::PuIdleThroughput => {
            golden_section_max(|r| single_link_throughput(r, params.mean_snr_p), lo, hi, RATE_TOLERANCE)
        }
        RateObjective::SuCleanThroughput => {
            golden_section_max(|r| single_link_throughput(r, params.mean_snr_s), lo, hi, RATE_TOLERANCE)
        }
        RateObjective::SuInterferedThroughput => {
            golden_section_max(|r| interfered_su_throughput(params, r, mc_samples, seed).0, lo, hi, RATE_TOLERANCE)
        }
    }
}
