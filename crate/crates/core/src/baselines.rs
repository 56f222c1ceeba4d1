//! Comparison schemes: fixed caching policies, with association either
//! greedy single-home (non-cooperative) or re-optimized by the
//! decomposition loop with the cache clamped (cooperative), so the
//! comparison isolates the caching policy. Power is always re-optimized
//! through the same convex subproblem.

use ndarray::Array2;
use rand::seq::SliceRandom;

use crate::gbd::{self, GbdError, GbdOptions};
use crate::model::{self, DecisionVars, BPS_PER_MBPS};
use crate::rng::{self, STREAM_BASELINE};
use crate::scenario::Scenario;
use crate::subproblem;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineKind {
    /// Uniform random caching; association and power re-optimized.
    CooperativeRandom,
    /// Most-popular-first caching; association and power re-optimized.
    CooperativePopularity,
    /// Most-popular-first caching; each user single-homes on its
    /// best-gain station, greedily, no cooperation.
    NonCooperative,
}

#[derive(Clone, Debug)]
pub struct BaselineOutcome {
    pub vars: DecisionVars,
    pub q_total_mbps: f64,
    pub q_cache_mbps: f64,
    pub q_backhaul_mbps: f64,
}

fn popularity_fill(sc: &Scenario) -> Array2<u8> {
    let (n_contents, n_bs) = (sc.num_contents(), sc.num_bs());
    let mut order: Vec<usize> = (0..n_contents).collect();
    order.sort_by(|&a, &b| {
        sc.popularity[b].partial_cmp(&sc.popularity[a]).unwrap().then(a.cmp(&b))
    });
    let d = sc.config.content_size_mbit;
    let cap = sc.config.cache_capacity_mbit;
    let mut x = Array2::<u8>::zeros((n_contents, n_bs));
    for m in 0..n_bs {
        let mut used = 0.0;
        for &f in &order {
            if used + d <= cap + 1e-9 {
                x[[f, m]] = 1;
                used += d;
            }
        }
    }
    x
}

/// The scheme's cache placement; always satisfies the capacity bound.
pub fn baseline_cache(sc: &Scenario, kind: BaselineKind, seed: u64) -> Array2<u8> {
    match kind {
        BaselineKind::CooperativePopularity | BaselineKind::NonCooperative => popularity_fill(sc),
        BaselineKind::CooperativeRandom => {
            let (n_contents, n_bs) = (sc.num_contents(), sc.num_bs());
            let d = sc.config.content_size_mbit;
            let cap = sc.config.cache_capacity_mbit;
            let mut rng = rng::stream(seed, STREAM_BASELINE);
            let mut x = Array2::<u8>::zeros((n_contents, n_bs));
            for m in 0..n_bs {
                let mut order: Vec<usize> = (0..n_contents).collect();
                order.shuffle(&mut rng);
                let mut used = 0.0;
                for f in order {
                    if used + d <= cap + 1e-9 {
                        x[[f, m]] = 1;
                        used += d;
                    }
                }
            }
            x
        }
    }
}

/// Greedy single-home association for the non-cooperative scheme: users
/// in descending order of their best channel gain, each taking its
/// best-gain station that still has a free block. Cooperative kinds
/// return None (association is re-optimized instead).
pub fn baseline_assoc(
    sc: &Scenario,
    kind: BaselineKind,
) -> Result<Option<Array2<u8>>, GbdError> {
    if kind != BaselineKind::NonCooperative {
        return Ok(None);
    }
    let (n_users, n_bs) = (sc.num_users(), sc.num_bs());
    let mut order: Vec<usize> = (0..n_users).collect();
    let best_gain =
        |n: usize| (0..n_bs).map(|m| sc.gain(n, m)).fold(f64::NEG_INFINITY, f64::max);
    order.sort_by(|&a, &b| {
        best_gain(b).partial_cmp(&best_gain(a)).unwrap().then(a.cmp(&b))
    });
    let mut z = Array2::<u8>::zeros((n_users, n_bs));
    let mut loads = vec![0usize; n_bs];
    for n in order {
        let pick = (0..n_bs)
            .filter(|&m| loads[m] < sc.config.max_blocks)
            .max_by(|&a, &b| sc.gain(n, a).partial_cmp(&sc.gain(n, b)).unwrap().then(b.cmp(&a)));
        let m = pick.ok_or_else(|| {
            GbdError::Infeasible(format!("all stations out of blocks before user {n}"))
        })?;
        z[[n, m]] = 1;
        loads[m] += 1;
    }
    Ok(Some(z))
}

/// Full evaluation of one scheme on one scenario. `opts` carries the
/// sampler and loop settings used when association is re-optimized; its
/// seed and cache clamp are overridden per call.
pub fn evaluate_baseline(
    sc: &Scenario,
    kind: BaselineKind,
    seed: u64,
    opts: &GbdOptions,
) -> Result<BaselineOutcome, GbdError> {
    let x = baseline_cache(sc, kind, seed);
    match baseline_assoc(sc, kind)? {
        Some(z) => {
            if !model::binary_feasible(sc, &x, &z) {
                return Err(GbdError::Infeasible(
                    "greedy association violates a binary constraint".into(),
                ));
            }
            let sol = subproblem::solve_power(sc, &x, &z)
                .map_err(|e| GbdError::Infeasible(e.to_string()))?;
            let vars = DecisionVars { x, z, p: sol.p.clone() };
            let split = model::throughput_split(sc, &vars);
            let lambda = sc.config.tradeoff_lambda;
            Ok(BaselineOutcome {
                vars,
                q_total_mbps: split.weighted_bps(lambda) / BPS_PER_MBPS,
                q_cache_mbps: split.cache_bps / BPS_PER_MBPS,
                q_backhaul_mbps: split.backhaul_bps / BPS_PER_MBPS,
            })
        }
        None => {
            let run_opts = GbdOptions { clamp_x: Some(x), seed, ..opts.clone() };
            let trace = gbd::run(sc, &run_opts)?;
            Ok(BaselineOutcome {
                vars: trace.vars,
                q_total_mbps: trace.q_total_mbps,
                q_cache_mbps: trace.q_cache_mbps,
                q_backhaul_mbps: trace.q_backhaul_mbps,
            })
        }
    }
}
