//! Decision variables, the weighted-throughput objective and feasibility
//! checks.
//!
//! A cache hit delivers the full link rate; a miss is discounted by the
//! backhaul factor λ. The solver minimizes the negated weighted throughput in
//! bits/s internally; reporting helpers convert to Mbit/s.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::scenario::Scenario;

pub const BPS_PER_MBPS: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionVars {
    /// Cache placement, contents × base stations.
    pub x: Array2<u8>,
    /// User association, users × base stations.
    pub z: Array2<u8>,
    /// Transmit power in watts, users × base stations.
    pub p: Array2<f64>,
}

impl DecisionVars {
    pub fn zeros(sc: &Scenario) -> Self {
        Self {
            x: Array2::zeros((sc.num_contents(), sc.num_bs())),
            z: Array2::zeros((sc.num_users(), sc.num_bs())),
            p: Array2::zeros((sc.num_users(), sc.num_bs())),
        }
    }
}

/// Shannon rate of link (n, m) at transmit power `p_w`, bits/s.
pub fn rate_bps(sc: &Scenario, n: usize, m: usize, p_w: f64) -> f64 {
    let snr = p_w * sc.gain(n, m) / sc.noise_w;
    sc.config.bandwidth_per_block_hz * (1.0 + snr).log2()
}

/// Objective weight of link (n, m): 1 when the serving station caches the
/// user's request, λ otherwise.
pub fn link_weight(sc: &Scenario, x: &Array2<u8>, n: usize, m: usize) -> f64 {
    if x[[sc.requests[n], m]] != 0 {
        1.0
    } else {
        sc.config.tradeoff_lambda
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ThroughputSplit {
    /// Sum rate over served cache-hit links, bits/s.
    pub cache_bps: f64,
    /// Raw (undiscounted) sum rate over served cache-miss links, bits/s.
    pub backhaul_bps: f64,
}

impl ThroughputSplit {
    pub fn weighted_bps(&self, lambda: f64) -> f64 {
        self.cache_bps + lambda * self.backhaul_bps
    }
}

pub fn throughput_split(sc: &Scenario, vars: &DecisionVars) -> ThroughputSplit {
    let mut split = ThroughputSplit::default();
    for n in 0..sc.num_users() {
        for m in 0..sc.num_bs() {
            if vars.z[[n, m]] != 0 {
                let r = rate_bps(sc, n, m, vars.p[[n, m]]);
                if vars.x[[sc.requests[n], m]] != 0 {
                    split.cache_bps += r;
                } else {
                    split.backhaul_bps += r;
                }
            }
        }
    }
    split
}

/// Weighted network throughput, bits/s.
pub fn weighted_throughput_bps(sc: &Scenario, vars: &DecisionVars) -> f64 {
    throughput_split(sc, vars).weighted_bps(sc.config.tradeoff_lambda)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Violation {
    /// Cached megabits exceed the station's capacity.
    CacheCapacity { m: usize, used_mbit: f64, cap_mbit: f64 },
    /// Station's summed transmit power exceeds its budget.
    PowerBudget { m: usize, used_w: f64, budget_w: f64 },
    /// Power above the per-user box (or positive on an unserved link).
    PowerAboveBox { n: usize, m: usize, p_w: f64, bound_w: f64 },
    /// Power below the per-user box on a served link.
    PowerBelowBox { n: usize, m: usize, p_w: f64, bound_w: f64 },
    /// User associated with no station.
    Unserved { n: usize },
    /// More users associated than the station has resource blocks.
    BlockCapacity { m: usize, used: usize, max: usize },
    /// Negative transmit power.
    NegativePower { n: usize, m: usize, p_w: f64 },
}

/// Check the binary-side constraints: cache capacity, at-least-one
/// association per user, and per-station block capacity.
pub fn binary_feasible(sc: &Scenario, x: &Array2<u8>, z: &Array2<u8>) -> bool {
    let tol = 1e-9;
    for m in 0..sc.num_bs() {
        let used: f64 = (0..sc.num_contents())
            .map(|f| x[[f, m]] as f64 * sc.config.content_size_mbit)
            .sum();
        if used > sc.config.cache_capacity_mbit * (1.0 + tol) + tol {
            return false;
        }
        let served: usize = (0..sc.num_users()).map(|n| z[[n, m]] as usize).sum();
        if served > sc.config.max_blocks {
            return false;
        }
    }
    (0..sc.num_users()).all(|n| (0..sc.num_bs()).any(|m| z[[n, m]] != 0))
}

/// Full feasibility check; returns every violation found. `tol` is a
/// relative tolerance on the continuous constraints.
pub fn check_constraints(sc: &Scenario, vars: &DecisionVars, tol: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    let slack = |scale: f64| tol * scale.max(1.0);
    for m in 0..sc.num_bs() {
        let used_mbit: f64 = (0..sc.num_contents())
            .map(|f| vars.x[[f, m]] as f64 * sc.config.content_size_mbit)
            .sum();
        let cap = sc.config.cache_capacity_mbit;
        if used_mbit > cap + slack(cap) {
            out.push(Violation::CacheCapacity { m, used_mbit, cap_mbit: cap });
        }
        let used_w: f64 = (0..sc.num_users()).map(|n| vars.p[[n, m]]).sum();
        let budget = sc.bs_power_budget_w(m);
        if used_w > budget + slack(budget) {
            out.push(Violation::PowerBudget { m, used_w, budget_w: budget });
        }
        let served: usize = (0..sc.num_users()).map(|n| vars.z[[n, m]] as usize).sum();
        if served > sc.config.max_blocks {
            out.push(Violation::BlockCapacity { m, used: served, max: sc.config.max_blocks });
        }
    }
    let (pmin, pmax) = (sc.user_power_min_w(), sc.user_power_max_w());
    for n in 0..sc.num_users() {
        if (0..sc.num_bs()).all(|m| vars.z[[n, m]] == 0) {
            out.push(Violation::Unserved { n });
        }
        for m in 0..sc.num_bs() {
            let p = vars.p[[n, m]];
            if p < -slack(1.0) {
                out.push(Violation::NegativePower { n, m, p_w: p });
            }
            let upper = vars.z[[n, m]] as f64 * pmax;
            if p > upper + slack(pmax) {
                out.push(Violation::PowerAboveBox { n, m, p_w: p, bound_w: upper });
            }
            let lower = vars.z[[n, m]] as f64 * pmin;
            if p < lower - slack(pmin) {
                out.push(Violation::PowerBelowBox { n, m, p_w: p, bound_w: lower });
            }
        }
    }
    out
}
