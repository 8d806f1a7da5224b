//! Acceptance report: one PASS/FAIL line per criterion, followed by indented
//! detail lines and a summary. The report itself always exits 0 so that the
//! remaining test targets still run; set `ACCEPTANCE_STRICT=1` to exit
//! nonzero when any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{random_params, random_policy, random_stats, space};
use harq_ic::channel::{link_stats, LinkStats, SystemParams, DEFAULT_MC_SAMPLES};
use harq_ic::degenerate::{
    clamped_b_max, closed_form_derivatives, closed_form_values, hp_condition, monotone_thresholds, threshold_structure,
    unconstrained_optimal,
};
use harq_ic::experiments::{derive_params, sweep, RatePolicy, Scheme, SweepKind, SweepRow};
use harq_ic::mdp::{
    cycle_values, long_term_metrics, mixed_transition_row, stationary_distribution, transition_row, Action, Knowledge,
    Policy,
};
use harq_ic::optimizer::{
    calibrated_low_regime_policy, cycle_derivatives, efficiency, greedy_policy_path, low_regime_policy, optimal_policy,
};
use harq_ic::oracle::{enumerate_frontier, oracle_optimum};
use harq_ic::simulator::{empirical_transition_check, run, SimConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 2012;
/// Samples for the sweeps over SNR ratios and deadlines, where every grid
/// point re-derives its rates.
const SWEEP_MC: usize = 1_000_000;

struct Report {
    failed: Vec<String>,
}

impl Report {
    fn criterion(&mut self, id: &str, title: &str, limit: Duration, body: impl FnOnce(&mut Vec<String>) -> bool) {
        let start = Instant::now();
        let mut details = Vec::new();
        let ok = body(&mut details);
        let elapsed = start.elapsed();
        let in_time = elapsed <= limit;
        if !in_time {
            details.push(format!("runtime {:.1} s exceeds {:.0} s", elapsed.as_secs_f64(), limit.as_secs_f64()));
        }
        let pass = ok && in_time;
        if !pass {
            self.failed.push(id.to_string());
        }
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("{verdict} {id} {title} [{:.1} s]", elapsed.as_secs_f64());
        for d in details {
            println!("    {d}");
        }
    }
}

fn near(label: &str, got: f64, want: f64, tol: f64, details: &mut Vec<String>) -> bool {
    let ok = (got - want).abs() <= tol;
    if !ok {
        details.push(format!("{label} = {got:.4}, expected {want} ± {tol}"));
    }
    ok
}

fn reference_stats(details: &mut Vec<String>) -> bool {
    let base = SystemParams::reference();
    let params = derive_params(&base, RatePolicy::RsuStar, DEFAULT_MC_SAMPLES, SEED).unwrap();
    let st = link_stats(&params, DEFAULT_MC_SAMPLES, SEED);
    let mut ok = true;
    ok &= near("R_p", params.rate_p, 2.52, 0.02, details);
    ok &= near("R_sK", params.rate_sk, 1.91, 0.02, details);
    ok &= near("R_sU", params.rate_su, 1.12, 0.02, details);
    for (label, got, want) in [
        ("q_pp(I)", st.q_pp_idle, 0.38),
        ("q_pp(A)", st.q_pp_active, 0.68),
        ("q_ps(I)", st.q_ps_idle, 0.61),
        ("q_ps(A)", st.q_ps_active, 0.74),
        ("p_buf", st.p_buf, 0.26),
        ("T_sU", st.t_su, 0.59),
        ("T_sK", st.t_sk, 1.10),
    ] {
        ok &= near(label, got, want, 0.01, details);
    }
    let mut equal = params.clone();
    equal.rate_su = equal.rate_sk;
    let eq = link_stats(&equal, DEFAULT_MC_SAMPLES, SEED);
    ok &= near("q_ps(A) at R_sU = R_sK", eq.q_ps_active, 0.88, 0.01, details);
    ok &= near("p_buf at R_sU = R_sK", eq.p_buf, 0.37, 0.01, details);
    ok &= near("T_sU at R_sU = R_sK", eq.t_su, 0.40, 0.01, details);
    details.push(format!(
        "rates {:.3}/{:.3}/{:.3}; q_pp {:.3}/{:.3} q_ps {:.3}/{:.3} p_buf {:.3} T_sU {:.3} T_sK {:.3}",
        params.rate_p,
        params.rate_sk,
        params.rate_su,
        st.q_pp_idle,
        st.q_pp_active,
        st.q_ps_idle,
        st.q_ps_active,
        st.p_buf,
        st.t_su,
        st.t_sk
    ));
    ok
}

fn low_regime(stats: &LinkStats, details: &mut Vec<String>) -> bool {
    let sp = space(5, 4);
    let eps_th = long_term_metrics(&Policy::k_only(sp.clone(), 1.0).unwrap(), stats).w_s_bar;
    let (mut err_t, mut err_w, mut cal_t, mut cal_w) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for k in 1..=20 {
        let eps = eps_th * k as f64 / 20.0;
        let m = long_term_metrics(&low_regime_policy(eps, eps_th, sp.clone()).unwrap(), stats);
        err_t = err_t.max((m.t_s_bar - stats.t_sk * eps).abs());
        err_w = err_w.max((m.w_s_bar - eps).abs());
        let (_, c) = calibrated_low_regime_policy(eps, eps_th, stats, sp.clone()).unwrap();
        cal_t = cal_t.max((c.t_s_bar - stats.t_sk * eps).abs());
        cal_w = cal_w.max((c.w_s_bar - eps).abs());
    }
    details.push(format!(
        "eps_th = {eps_th:.4}; scaled K-only policy: max |T - T_sK eps| = {err_t:.2e}, max |W - eps| = {err_w:.2e}"
    ));
    details.push(format!(
        "calibrated K-only policy (informational): max |T - T_sK eps| = {cal_t:.2e}, max |W - eps| = {cal_w:.2e}"
    ));
    err_t <= 1e-9 && err_w <= 1e-9
}

fn greedy_matches_oracle(details: &mut Vec<String>) -> bool {
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for d in [2, 3] {
        for b in [0, d - 1] {
            for k in 0..10 {
                let stats = random_stats(SEED + 100 * d as u64 + 10 * b as u64 + k, d, b, true);
                let sp = space(d, b);
                let frontier = enumerate_frontier(&stats, sp.clone()).unwrap();
                let path = greedy_policy_path(&stats, sp).unwrap();
                for eps in [0.1, 0.3, 0.5, 0.8] {
                    let (_, m) = optimal_policy(eps, &path, &stats).unwrap();
                    worst = worst.max((m.t_s_bar - oracle_optimum(eps, &frontier, &stats)).abs());
                    cases += 1;
                }
            }
        }
    }
    details.push(format!("{cases} cases, max |T_opt - T_oracle| = {worst:.2e}"));
    worst <= 1e-6
}

fn degenerate_structure(details: &mut Vec<String>) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut found = 0;
    let mut attempts = 0;
    let mut ok = true;
    let mut worst_cf = 0.0_f64;
    while found < 10 && attempts < 10_000 {
        attempts += 1;
        let d = 2 + found % 5;
        let params = random_params(&mut rng, d, d - 1, false);
        let stats = link_stats(&params, 200_000, SEED + attempts);
        if !hp_condition(&stats) {
            continue;
        }
        found += 1;
        let sp = space(d, d - 1);
        let path = greedy_policy_path(&stats, sp.clone()).unwrap();
        for step in &path.steps {
            let Some(counts) = threshold_structure(&step.policy) else {
                details.push(format!("scenario {found} (D = {d}): path policy without threshold structure"));
                ok = false;
                continue;
            };
            if monotone_thresholds(&counts, &sp).is_none() {
                details.push(format!("scenario {found} (D = {d}): thresholds {counts:?} not monotone"));
                ok = false;
            }
            let values = cycle_values(&step.policy, &stats);
            for (i, &s) in sp.states().iter().enumerate() {
                let idle = step.policy.prob_at(i) == 0.0;
                if s.phi == Knowledge::K || idle {
                    let (g, v) = closed_form_values(s, &stats, d).unwrap();
                    worst_cf = worst_cf.max((values.g[i] - g).abs()).max((values.v[i] - v).abs());
                }
                if idle {
                    let (g, v) = closed_form_derivatives(s.t, s.b, &stats, d).unwrap();
                    worst_cf = worst_cf.max((efficiency(&step.policy, s, &stats).unwrap() - g / v).abs());
                }
            }
        }
        let last = threshold_structure(&path.last().policy).unwrap_or_default();
        for t in 1..=d {
            let expected = clamped_b_max(t, &stats, &sp).unwrap();
            if last.get(t - 1).map(|&c| c as i64 - 1) != Some(expected) {
                details
                    .push(format!("scenario {found} (D = {d}): final thresholds {last:?} vs b_max({t}) = {expected}"));
                ok = false;
            }
        }
        if unconstrained_optimal(&stats, sp).unwrap() != path.last().policy {
            details.push(format!("scenario {found} (D = {d}): last path policy differs from the closed-form optimum"));
            ok = false;
        }
    }
    details.push(format!("{found} scenarios from {attempts} draws; max closed-form deviation {worst_cf:.2e}"));
    ok && found == 10 && worst_cf <= 1e-9
}

fn simulator_agreement(params: &SystemParams, stats: &LinkStats, details: &mut Vec<String>) -> bool {
    let sp = space(5, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut ok = true;
    let mut worst_z = 0.0_f64;
    for k in 0..10 {
        let policy = random_policy(&mut rng, sp.clone());
        let analytic = long_term_metrics(&policy, stats);
        let config = SimConfig { params: params.clone(), policy, num_slots: 1_000_000, seed: SEED + k };
        let sim = run(&config).unwrap();
        for (label, emp, se, want) in [
            ("T_s", sim.t_s_emp, sim.t_s_stderr, analytic.t_s_bar),
            ("W_s", sim.w_s_emp, sim.w_s_stderr, analytic.w_s_bar),
            ("T_p", sim.t_p_emp, sim.t_p_stderr, analytic.t_p_bar),
        ] {
            let z = (emp - want).abs() / se;
            worst_z = worst_z.max(z);
            if z > 3.0 {
                details.push(format!(
                    "policy {k}: {label} simulated {emp:.5} ± {se:.5}, analytic {want:.5} ({z:.2} sigma)"
                ));
                ok = false;
            }
        }
    }
    let config =
        SimConfig { params: params.clone(), policy: Policy::always_active(sp), num_slots: 10_000_000, seed: SEED };
    let check = empirical_transition_check(&config, stats).unwrap();
    let rare = check.rows.iter().filter(|r| r.visits < 100_000).count();
    details.push(format!(
        "max deviation {worst_z:.2} sigma; always-active transition check at 1e7 slots: max error {:.4} over {} rows ({rare} with < 1e5 visits)",
        check.max_abs_error,
        check.rows.len()
    ));
    if check.max_abs_error > 0.005 {
        let worst = check.rows.iter().max_by(|a, b| a.max_abs_error.total_cmp(&b.max_abs_error)).unwrap();
        details.push(format!(
            "worst row {} {:?}: error {:.4} at {} visits",
            worst.state, worst.action, worst.max_abs_error, worst.visits
        ));
    }
    ok && check.max_abs_error <= 0.005
}

fn rows_of(rows: &[SweepRow], scheme: Scheme) -> Vec<&SweepRow> {
    rows.iter().filter(|r| r.scheme == scheme).collect()
}

fn sweep_shapes(stats: &LinkStats, details: &mut Vec<String>) -> bool {
    let base = SystemParams::reference();
    let mut ok = true;

    // SU vs PU throughput
    let grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    let rows = sweep(SweepKind::TsVsTp, &base, RatePolicy::RsuStar, &grid, DEFAULT_MC_SAMPLES, SEED).unwrap();
    let eps_th = greedy_policy_path(stats, space(5, 4)).unwrap().eps_th;
    let (bic, fic, none) =
        (rows_of(&rows, Scheme::FicBic), rows_of(&rows, Scheme::FicOnly), rows_of(&rows, Scheme::NoIc));
    let mut order_ok = true;
    let mut equality_ok = true;
    for ((a, b), c) in bic.iter().zip(&fic).zip(&none) {
        order_ok &= a.t_s_bar >= b.t_s_bar - 1e-6 && b.t_s_bar >= c.t_s_bar - 1e-6;
        let equal = (a.t_s_bar - b.t_s_bar).abs() <= 1e-6;
        equality_ok &= equal == (a.x <= eps_th);
    }
    details.push(format!(
        "TS_VS_TP: ordering FIC/BIC >= FIC-only >= no-IC {}; FIC/BIC = FIC-only exactly for eps <= eps_th = {eps_th:.4}: {}",
        if order_ok { "holds" } else { "violated" },
        if equality_ok { "yes" } else { "no" }
    ));
    ok &= order_ok && equality_ok;

    // deadline
    let rows = sweep(SweepKind::Deadline, &base, RatePolicy::RsuStar, &[1.0, 2.0, 3.0], SWEEP_MC, SEED).unwrap();
    let at_one: Vec<&SweepRow> = rows.iter().filter(|r| r.x == 1.0).collect();
    let values: Vec<f64> = at_one.iter().map(|r| r.t_s_bar).collect();
    let spread = values.iter().cloned().fold(f64::MIN, f64::max) - values.iter().cloned().fold(f64::MAX, f64::min);
    let ic_spread = at_one
        .iter()
        .filter(|r| r.scheme != Scheme::PmKnown)
        .map(|r| (r.t_s_bar - at_one[2].t_s_bar).abs())
        .fold(0.0, f64::max);
    details.push(format!(
        "DEADLINE at D = 1: {}; spread over all schemes {spread:.4}, over FIC/BIC, FIC-only and no-IC {ic_spread:.1e}",
        at_one.iter().map(|r| format!("{} {:.4}", r.scheme.name(), r.t_s_bar)).collect::<Vec<_>>().join(", ")
    ));
    ok &= spread <= 1e-6;

    // PU interference at the SU receiver
    let grid = SweepKind::GpsRatio.default_grid();
    let rows = sweep(SweepKind::GpsRatio, &base, RatePolicy::RsuStar, &grid, SWEEP_MC, SEED).unwrap();
    let (bic, pm) = (rows_of(&rows, Scheme::FicBic), rows_of(&rows, Scheme::PmKnown));
    let gap: Vec<f64> = bic.iter().zip(&pm).map(|(a, b)| (b.t_s_bar - a.t_s_bar) / b.t_s_bar).collect();
    let at_zero = gap[0];
    let at_end = *gap.last().unwrap();
    let (arg, _) =
        bic.iter().enumerate().min_by(|a, b| a.1.t_s_bar.total_cmp(&b.1.t_s_bar)).map(|(i, r)| (r.x, i)).unwrap();
    let worst_gap = gap.iter().cloned().fold(0.0, f64::max);
    details.push(format!(
        "GPS_RATIO: relative gap to PM-known {at_zero:.1e} at 0, {at_end:.1e} at 4 (largest {worst_gap:.4}); FIC/BIC minimum at {arg}"
    ));
    ok &= at_zero.abs() <= 1e-6 && at_end <= 0.05 && at_end < 0.25 * worst_gap && (0.25..=0.75).contains(&arg);
    ok
}

fn invariants(details: &mut Vec<String>) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut positivity, mut fd, mut rows, mut renewal) = (true, 0.0_f64, 0.0_f64, 0.0_f64);
    for k in 0..100u64 {
        let d = 1 + (k as usize % 5);
        let b = if k % 2 == 0 { d - 1 } else { 0 };
        let stats = random_stats(SEED + 7 * k, d, b, k % 4 != 0);
        let sp = space(d, b);
        let policy = random_policy(&mut rng, sp.clone());
        for (i, &s) in sp.states().iter().enumerate() {
            positivity &= efficiency(&policy, s, &stats).is_ok();
            for row in [
                transition_row(s, Action::Active, &stats, &sp),
                transition_row(s, Action::Idle, &stats, &sp),
                mixed_transition_row(s, policy.prob_at(i), &stats, &sp),
            ] {
                rows = rows.max((row.iter().map(|&(_, p)| p).sum::<f64>() - 1.0).abs());
            }
            let deriv = cycle_derivatives(&policy, s, &stats);
            let mu = policy.prob_at(i);
            let (lo, hi) = if mu + 1e-6 <= 1.0 { (mu, mu + 1e-6) } else { (mu - 1e-6, mu) };
            let mut a = policy.clone();
            a.set_prob(i, lo);
            let mut c = policy.clone();
            c.set_prob(i, hi);
            let (va, vc) = (cycle_values(&a, &stats), cycle_values(&c, &stats));
            let h = hi - lo;
            fd = fd
                .max(((vc.g[i] - va.g[i]) / h - deriv.g_prime).abs())
                .max(((vc.v[i] - va.v[i]) / h - deriv.v_prime).abs())
                .max(((vc.dur[i] - va.dur[i]) / h - deriv.d_prime).abs());
        }
        let m = long_term_metrics(&policy, &stats);
        let pi = stationary_distribution(&policy, &stats).unwrap();
        renewal = renewal.max((m.t_s_bar - pi.t_s_bar()).abs()).max((m.w_s_bar - pi.w_s_bar).abs());
    }
    details.push(format!(
        "denominators positive: {positivity}; finite differences {fd:.1e}; row sums {rows:.1e}; renewal vs stationary {renewal:.1e}"
    ));
    positivity && fd <= 1e-5 && rows <= 1e-12 && renewal <= 1e-9
}

fn main() -> ExitCode {
    let mut report = Report { failed: Vec::new() };
    let params = derive_params(&SystemParams::reference(), RatePolicy::RsuStar, DEFAULT_MC_SAMPLES, SEED).unwrap();
    let stats = link_stats(&params, DEFAULT_MC_SAMPLES, SEED);

    report.criterion("AC1", "reference scenario rates and link statistics", Duration::from_secs(30), reference_stats);
    report.criterion("AC2", "scaled K-only policy exact in the low regime", Duration::from_secs(1), |d| {
        low_regime(&stats, d)
    });
    report.criterion("AC3", "greedy optimum equals exhaustive oracle", Duration::from_secs(60), greedy_matches_oracle);
    report.criterion(
        "AC4",
        "degenerate threshold structure and closed forms",
        Duration::from_secs(60),
        degenerate_structure,
    );
    report.criterion("AC5", "simulator agrees with analysis", Duration::from_secs(300), |d| {
        simulator_agreement(&params, &stats, d)
    });
    report.criterion("AC6", "sweep shapes", Duration::from_secs(600), |d| sweep_shapes(&stats, d));
    report.criterion("AC7", "invariants on 100 randomized cases", Duration::from_secs(600), invariants);

    if report.failed.is_empty() {
        println!("7 of 7 criteria passed");
    } else {
        println!("{} of 7 criteria passed; failed: {}", 7 - report.failed.len(), report.failed.join(", "));
    }
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && !report.failed.is_empty() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
