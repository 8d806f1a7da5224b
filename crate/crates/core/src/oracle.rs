//! Exhaustive reference solution for small state spaces.
//!
//! Every deterministic policy is evaluated, and the upper concave boundary of
//! the resulting `(W̄_s, T̄_s)` points is kept up to the highest-throughput
//! vertex. Randomizing between neighbouring vertices fills in the segments.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::LinkStats;
use crate::error::{Error, Result};
use crate::mdp::{long_term_metrics, Policy, StateSpace};

pub const MAX_ORACLE_STATES: usize = 16;

/// Points closer than this in access rate are treated as one abscissa.
const SAME_ACCESS_RATE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierPoint {
    pub w_s_bar: f64,
    pub t_s_bar: f64,
    pub policy: Policy,
}

/// `(w, t)` of the upper hull of the given points, sorted by `w`, truncated
/// at the maximum-throughput vertex. Returns indices into `points`.
pub fn upper_frontier(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    // by access rate, then best throughput first, then original index
    order.sort_by(|&a, &b| {
        points[a].0.total_cmp(&points[b].0).then(points[b].1.total_cmp(&points[a].1)).then(a.cmp(&b))
    });
    let mut hull: Vec<usize> = Vec::new();
    for &i in &order {
        if let Some(&last) = hull.last() {
            if (points[i].0 - points[last].0).abs() <= SAME_ACCESS_RATE {
                continue;
            }
        }
        while hull.len() >= 2 {
            let (o, a) = (points[hull[hull.len() - 2]], points[hull[hull.len() - 1]]);
            let p = points[i];
            let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let peak =
        hull.iter().enumerate().fold(0, |best, (k, &i)| if points[i].1 > points[hull[best]].1 { k } else { best });
    hull.truncate(peak + 1);
    hull
}

/// Upper boundary of the achievable `(W̄_s, T̄_s)` region.
pub fn enumerate_frontier(stats: &LinkStats, space: Arc<StateSpace>) -> Result<Vec<FrontierPoint>> {
    let n = space.len();
    if n > MAX_ORACLE_STATES {
        return Err(Error::TooManyStates(n));
    }
    let points: Vec<(f64, f64)> = (0..1u64 << n)
        .into_par_iter()
        .map(|mask| {
            let m = long_term_metrics(&Policy::from_bitmask(space.clone(), mask), stats);
            (m.w_s_bar, m.t_s_bar)
        })
        .collect();
    Ok(upper_frontier(&points)
        .into_iter()
        .map(|mask| FrontierPoint {
            w_s_bar: points[mask].0,
            t_s_bar: points[mask].1,
            policy: Policy::from_bitmask(space.clone(), mask as u64),
        })
        .collect())
}

/// Best throughput with access rate at most `eps_w`.
///
/// Between neighbouring vertices that differ in a single state the blend
/// weight is found by bisection on that state's access probability; otherwise
/// the segment is interpolated linearly.
pub fn oracle_optimum(eps_w: f64, frontier: &[FrontierPoint], stats: &LinkStats) -> f64 {
    let first = frontier.first().expect("frontier is never empty");
    if eps_w <= first.w_s_bar {
        return first.t_s_bar;
    }
    let last = frontier.last().unwrap();
    if eps_w >= last.w_s_bar {
        return last.t_s_bar;
    }
    let k = frontier.iter().rposition(|p| p.w_s_bar <= eps_w).unwrap();
    let (a, b) = (&frontier[k], &frontier[k + 1]);
    let differing: Vec<usize> =
        (0..a.policy.probs().len()).filter(|&i| a.policy.prob_at(i) != b.policy.prob_at(i)).collect();
    if let [i] = differing[..] {
        let (pa, pb) = (a.policy.prob_at(i), b.policy.prob_at(i));
        let mut blend = a.policy.clone();
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        let mut t = a.t_s_bar;
        for _ in 0..200 {
            let lambda = 0.5 * (lo + hi);
            blend.set_prob(i, pa + lambda * (pb - pa));
            let m = long_term_metrics(&blend, stats);
            t = m.t_s_bar;
            if (m.w_s_bar - eps_w).abs() <= 1e-13 || hi - lo < 1e-15 {
                break;
            }
            if m.w_s_bar < eps_w {
                lo = lambda;
            } else {
                hi = lambda;
            }
        }
        t
    } else {
        let f = (eps_w - a.w_s_bar) / (b.w_s_bar - a.w_s_bar);
        a.t_s_bar + f * (b.t_s_bar - a.t_s_bar)
    }
}
