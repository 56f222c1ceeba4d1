//! Convex power-allocation subproblem for a fixed caching/association pair,
//! solved exactly per base station by weighted water-filling over the
//! per-user power box, with Lagrange multipliers recovered in closed form.
//!
//! For served links the objective weight is `w = λ + (1-λ)·x`, the marginal
//! utility of power is `w·B·g / ((σ² + p·g)·ln 2)`, and the optimal power at
//! water level ν is `clip(w·B/(ν·ln2) - σ²/g, [p_min, p_max])`. The station's
//! water level is found by bisection on the budget constraint.

use ndarray::Array2;
use serde::Serialize;
use thiserror::Error;

use crate::model::{self, BPS_PER_MBPS};
use crate::scenario::Scenario;

const LN2: f64 = std::f64::consts::LN_2;
const BISECT_REL_TOL: f64 = 1e-12;
const BISECT_MAX_ITER: usize = 200;

#[derive(Debug, Error)]
pub enum SubproblemError {
    #[error("power subproblem infeasible at base station {bs}: lower bounds need {need_w:.6} W of budget {budget_w:.6} W")]
    Infeasible { bs: usize, need_w: f64, budget_w: f64 },
}

/// KKT multipliers of the power subproblem, in bits/s per watt.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualValues {
    /// Multipliers of `p ≥ 0`.
    pub nonneg: Array2<f64>,
    /// Multipliers of the per-user upper box `p ≤ z·p_max`.
    pub box_upper: Array2<f64>,
    /// Multipliers of the per-user lower box `p ≥ z·p_min`.
    pub box_lower: Array2<f64>,
    /// Per-station budget multipliers (the water levels).
    pub budget: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerSolution {
    /// Optimal transmit powers, watts.
    pub p: Array2<f64>,
    pub duals: DualValues,
    /// Weighted throughput at the optimum, bits/s.
    pub weighted_bps: f64,
}

impl PowerSolution {
    /// Subproblem optimum in minimization form, Mbit/s.
    pub fn cost_mbps(&self) -> f64 {
        -self.weighted_bps / BPS_PER_MBPS
    }

    /// Per-coordinate stationarity residual `|-∂R/∂p - δ1 + δ2 - δ3 + δ4|`
    /// on served links, Mbit/s per watt. Zero rows for unserved links.
    pub fn kkt_residuals(&self, sc: &Scenario, x: &Array2<u8>, z: &Array2<u8>) -> Array2<f64> {
        let mut out = Array2::zeros(self.p.dim());
        for n in 0..sc.num_users() {
            for m in 0..sc.num_bs() {
                if z[[n, m]] != 0 {
                    let w = model::link_weight(sc, x, n, m);
                    let g = sc.gain(n, m);
                    let marg = marginal(w, sc.config.bandwidth_per_block_hz, g, sc.noise_w, self.p[[n, m]]);
                    let r = -marg - self.duals.nonneg[[n, m]] + self.duals.box_upper[[n, m]]
                        - self.duals.box_lower[[n, m]]
                        + self.duals.budget[m];
                    out[[n, m]] = r.abs() / BPS_PER_MBPS;
                }
            }
        }
        out
    }
}

/// d/dp of `w·B·log2(1 + p·g/σ²)`, bits/s per watt.
fn marginal(w: f64, bandwidth: f64, gain: f64, noise: f64, p: f64) -> f64 {
    if gain <= 0.0 {
        return 0.0;
    }
    w * bandwidth * gain / ((noise + p * gain) * LN2)
}

/// Optimal power of one served link at water level `nu > 0`.
fn power_at_level(w: f64, bandwidth: f64, gain: f64, noise: f64, nu: f64, pmin: f64, pmax: f64) -> f64 {
    if gain <= 0.0 {
        return pmin;
    }
    let raw = w * bandwidth / (nu * LN2) - noise / gain;
    raw.clamp(pmin, pmax)
}

/// Exact minimizer of the negated weighted throughput over transmit powers
/// for the served links of `z`, subject to per-user boxes and per-station
/// budgets. Stations decouple, so each is water-filled independently.
pub fn solve_power(
    sc: &Scenario,
    x: &Array2<u8>,
    z: &Array2<u8>,
) -> Result<PowerSolution, SubproblemError> {
    let (n_users, n_bs) = (sc.num_users(), sc.num_bs());
    let bandwidth = sc.config.bandwidth_per_block_hz;
    let noise = sc.noise_w;
    let (pmin, pmax) = (sc.user_power_min_w(), sc.user_power_max_w());

    let mut p = Array2::<f64>::zeros((n_users, n_bs));
    let mut duals = DualValues {
        nonneg: Array2::zeros((n_users, n_bs)),
        box_upper: Array2::zeros((n_users, n_bs)),
        box_lower: Array2::zeros((n_users, n_bs)),
        budget: vec![0.0; n_bs],
    };

    for m in 0..n_bs {
        let served: Vec<usize> = (0..n_users).filter(|&n| z[[n, m]] != 0).collect();
        if served.is_empty() {
            continue;
        }
        let budget = sc.bs_power_budget_w(m);
        let need = pmin * served.len() as f64;
        if need > budget * (1.0 + 1e-12) {
            return Err(SubproblemError::Infeasible { bs: m, need_w: need, budget_w: budget });
        }
        let weights: Vec<f64> = served.iter().map(|&n| model::link_weight(sc, x, n, m)).collect();
        let gains: Vec<f64> = served.iter().map(|&n| sc.gain(n, m)).collect();

        let nu = if pmax * served.len() as f64 <= budget {
            // budget slack: every served link sits at its upper bound
            for &n in &served {
                p[[n, m]] = pmax;
            }
            0.0
        } else {
            let marg_at = |pp: f64| -> Vec<f64> {
                served
                    .iter()
                    .enumerate()
                    .map(|(i, _)| marginal(weights[i], bandwidth, gains[i], noise, pp))
                    .collect()
            };
            let hi0 = marg_at(pmin).into_iter().fold(0.0_f64, f64::max);
            if hi0 <= 0.0 {
                // all marginals vanish (zero weights or dead channels):
                // any feasible point is optimal, take the lower box
                for &n in &served {
                    p[[n, m]] = pmin;
                }
                0.0
            } else {
                let lo0 = marg_at(pmax).into_iter().fold(f64::INFINITY, f64::min).max(0.0);
                let total_at = |nu: f64| -> f64 {
                    served
                        .iter()
                        .enumerate()
                        .map(|(i, _)| {
                            power_at_level(weights[i], bandwidth, gains[i], noise, nu, pmin, pmax)
                        })
                        .sum()
                };
                // invariant: total(lo) ≥ budget ≥ total(hi)
                let (mut lo, mut hi) = (lo0, hi0);
                for _ in 0..BISECT_MAX_ITER {
                    if (hi - lo) <= BISECT_REL_TOL * hi {
                        break;
                    }
                    let mid = 0.5 * (lo + hi);
                    if total_at(mid) >= budget {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let nu = hi;
                for (i, &n) in served.iter().enumerate() {
                    p[[n, m]] =
                        power_at_level(weights[i], bandwidth, gains[i], noise, nu, pmin, pmax);
                }
                nu
            }
        };

        duals.budget[m] = nu;
        for (i, &n) in served.iter().enumerate() {
            let at_upper = p[[n, m]] >= pmax - 1e-15 * pmax.max(1.0);
            let at_lower = p[[n, m]] <= pmin + 1e-15 * pmin.max(1.0);
            let marg = marginal(weights[i], bandwidth, gains[i], noise, p[[n, m]]);
            if at_upper {
                duals.box_upper[[n, m]] = (marg - nu).max(0.0);
            } else if at_lower {
                duals.box_lower[[n, m]] = (nu - marg).max(0.0);
            }
        }
        // unserved links of this station: p = 0, residual absorbed by the
        // nonnegativity multiplier so stationarity holds with δ1 = ν
        for n in 0..n_users {
            if z[[n, m]] == 0 {
                duals.nonneg[[n, m]] = nu;
            }
        }
    }

    let vars = model::DecisionVars { x: x.clone(), z: z.clone(), p: p.clone() };
    let weighted_bps = model::weighted_throughput_bps(sc, &vars);
    Ok(PowerSolution { p, duals, weighted_bps })
}

/// Lagrangian of the power subproblem at arbitrary primal/dual/binary
/// values, in bits/s (minimization form): the negated weighted throughput
/// plus the four dual-weighted constraint residuals.
pub fn lagrangian_bps(
    sc: &Scenario,
    p: &Array2<f64>,
    duals: &DualValues,
    x: &Array2<u8>,
    z: &Array2<u8>,
) -> f64 {
    let (pmin, pmax) = (sc.user_power_min_w(), sc.user_power_max_w());
    let mut total = 0.0;
    for m in 0..sc.num_bs() {
        let mut station_power = 0.0;
        for n in 0..sc.num_users() {
            let pw = p[[n, m]];
            let zf = z[[n, m]] as f64;
            total -= zf * model::link_weight(sc, x, n, m) * model::rate_bps(sc, n, m, pw);
            total += duals.nonneg[[n, m]] * (-pw);
            total += duals.box_upper[[n, m]] * (pw - zf * pmax);
            total += duals.box_lower[[n, m]] * (zf * pmin - pw);
            station_power += pw;
        }
        total += duals.budget[m] * (station_power - sc.bs_power_budget_w(m));
    }
    total
}

/// One optimality cut of the master problem, affine in the binaries with the
/// subproblem's primal/dual solution frozen. All values in Mbit/s
/// (minimization form, so typically negative).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BendersCut {
    /// Generating iterate id.
    pub id: usize,
    pub constant_mbps: f64,
    /// Coefficients on the association bits `z[n,m]`.
    pub coeff_z_mbps: Array2<f64>,
    /// Coefficients on the products `x[f_n,m]·z[n,m]`.
    pub coeff_xz_mbps: Array2<f64>,
}

impl BendersCut {
    /// Cut value at a binary assignment, Mbit/s (minimization form).
    pub fn eval_mbps(&self, sc: &Scenario, x: &Array2<u8>, z: &Array2<u8>) -> f64 {
        let mut v = self.constant_mbps;
        for n in 0..sc.num_users() {
            for m in 0..sc.num_bs() {
                if z[[n, m]] != 0 {
                    v += self.coeff_z_mbps[[n, m]];
                    if x[[sc.requests[n], m]] != 0 {
                        v += self.coeff_xz_mbps[[n, m]];
                    }
                }
            }
        }
        v
    }
}

/// Build the optimality cut from a subproblem solution. The generating
/// assignment is implicit in the solution's powers and multipliers; the cut
/// lower-bounds the master objective everywhere and is tight at the
/// generator.
pub fn make_cut(sc: &Scenario, sol: &PowerSolution, id: usize) -> BendersCut {
    let (n_users, n_bs) = (sc.num_users(), sc.num_bs());
    let lambda = sc.config.tradeoff_lambda;
    let (pmin, pmax) = (sc.user_power_min_w(), sc.user_power_max_w());

    let mut coeff_z = Array2::<f64>::zeros((n_users, n_bs));
    let mut coeff_xz = Array2::<f64>::zeros((n_users, n_bs));
    let mut constant = 0.0;
    for m in 0..n_bs {
        let mut station_power = 0.0;
        for n in 0..n_users {
            let p = sol.p[[n, m]];
            let rate = model::rate_bps(sc, n, m, p) / BPS_PER_MBPS;
            let d1 = sol.duals.nonneg[[n, m]] / BPS_PER_MBPS;
            let d2 = sol.duals.box_upper[[n, m]] / BPS_PER_MBPS;
            let d3 = sol.duals.box_lower[[n, m]] / BPS_PER_MBPS;
            coeff_xz[[n, m]] = -(1.0 - lambda) * rate;
            coeff_z[[n, m]] = -lambda * rate - d2 * pmax + d3 * pmin;
            constant += (-d1 + d2 - d3) * p;
            station_power += p;
        }
        constant += sol.duals.budget[m] / BPS_PER_MBPS * (station_power - sc.bs_power_budget_w(m));
    }
    BendersCut { id, constant_mbps: constant, coeff_z_mbps: coeff_z, coeff_xz_mbps: coeff_xz }
}
