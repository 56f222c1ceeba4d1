//! Shared fixtures and independent oracles for the integration suites:
//! a projected-gradient solver for the power subproblem, exhaustive
//! enumeration of the full mixed-binary problem, and a direct master
//! minimizer over raw cuts.

#![allow(dead_code)]

use ndarray::Array2;

use istn_core::gbd::IterRow;
use istn_core::model;
use istn_core::scenario::{Scenario, ScenarioConfig};
use istn_core::subproblem::BendersCut;

pub const MBPS: f64 = 1e6;

/// Criterion-sized instance: 4 users, 1 satellite + 1 TBS, 3 contents,
/// 3 blocks per station.
pub fn tiny_instance(seed: u64) -> Scenario {
    Scenario::generate(ScenarioConfig {
        num_users: 4,
        num_satellites: 1,
        num_tbs: 1,
        num_contents: 3,
        max_blocks: 3,
        rng_seed: seed,
        ..Default::default()
    })
    .unwrap()
}

/// Desk-scale instance for the multi-cut comparison: 6 users, 1 + 1
/// stations, 4 contents; blocks chosen so association capacity binds.
pub fn desk_instance(seed: u64) -> Scenario {
    Scenario::generate(ScenarioConfig {
        num_users: 6,
        num_satellites: 1,
        num_tbs: 1,
        num_contents: 4,
        // one spare block per BS: with 3 blocks each, 6 users leave the
        // association polytope a knife edge and the annealer starves
        max_blocks: 4,
        bandwidth_per_block_hz: 1e6,
        rng_seed: seed,
        ..Default::default()
    })
    .unwrap()
}

/// Reference-parameter instance (simulation defaults, λ = 0.6).
pub fn table_instance(seed: u64) -> Scenario {
    Scenario::generate(ScenarioConfig { rng_seed: seed, ..Default::default() }).unwrap()
}

fn clip(v: f64, lo: f64, hi: f64) -> f64 {
    v.max(lo).min(hi)
}

/// Euclidean projection onto {lo ≤ p ≤ hi (componentwise), Σp ≤ budget}
/// by bisecting the uniform shift θ of the clipped vector.
fn project(v: &[f64], lo: f64, hi: f64, budget: f64) -> Vec<f64> {
    let total: f64 = v.iter().map(|&x| clip(x, lo, hi)).sum();
    if total <= budget {
        return v.iter().map(|&x| clip(x, lo, hi)).collect();
    }
    let mut t_lo = 0.0;
    let mut t_hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - lo;
    for _ in 0..200 {
        let theta = 0.5 * (t_lo + t_hi);
        let s: f64 = v.iter().map(|&x| clip(x - theta, lo, hi)).sum();
        if s > budget {
            t_lo = theta;
        } else {
            t_hi = theta;
        }
    }
    v.iter().map(|&x| clip(x - t_hi, lo, hi)).collect()
}

/// Independent subproblem oracle: projected-gradient ascent with
/// backtracking on the weighted throughput, per station. Returns the
/// optimal weighted objective in bit/s, or None when the minimum-power
/// load alone exceeds some station budget.
pub fn projected_gradient_oracle(sc: &Scenario, x: &Array2<u8>, z: &Array2<u8>) -> Option<f64> {
    let ln2 = std::f64::consts::LN_2;
    let band = sc.config.bandwidth_per_block_hz;
    let noise = sc.noise_w;
    let lo = sc.user_power_min_w();
    let hi = sc.user_power_max_w();
    let mut total = 0.0;
    for m in 0..sc.num_bs() {
        let served: Vec<usize> = (0..sc.num_users()).filter(|&n| z[[n, m]] != 0).collect();
        if served.is_empty() {
            continue;
        }
        let budget = sc.bs_power_budget_w(m);
        if served.len() as f64 * lo > budget + 1e-12 {
            return None;
        }
        let weights: Vec<f64> =
            served.iter().map(|&n| model::link_weight(sc, x, n, m)).collect();
        let gains: Vec<f64> = served.iter().map(|&n| sc.gain(n, m)).collect();
        let value = |p: &[f64]| -> f64 {
            p.iter()
                .zip(&weights)
                .zip(&gains)
                .map(|((&pi, &w), &g)| w * band * (1.0 + pi * g / noise).log2())
                .sum()
        };
        let grad = |p: &[f64]| -> Vec<f64> {
            p.iter()
                .zip(&weights)
                .zip(&gains)
                .map(|((&pi, &w), &g)| w * band * g / ((noise + pi * g) * ln2))
                .collect()
        };
        let mut p = project(&vec![budget / served.len() as f64; served.len()], lo, hi, budget);
        let mut f = value(&p);
        let g0 = grad(&p);
        let gmax = g0.iter().cloned().fold(0.0_f64, f64::max).max(1e-300);
        let mut alpha = (hi - lo).max(hi) / gmax;
        for _ in 0..4000 {
            let g = grad(&p);
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<f64> =
                    p.iter().zip(&g).map(|(&pi, &gi)| pi + alpha * gi).collect();
                let next = project(&trial, lo, hi, budget);
                let f_next = value(&next);
                let ascent: f64 =
                    g.iter().zip(next.iter().zip(&p)).map(|(&gi, (&a, &b))| gi * (a - b)).sum();
                if f_next >= f + 1e-4 * ascent {
                    let moved: f64 =
                        next.iter().zip(&p).map(|(&a, &b)| (a - b).abs()).sum();
                    p = next;
                    f = f_next;
                    alpha *= 1.5;
                    accepted = moved > 1e-15 * (1.0 + hi);
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        total += f;
    }
    Some(total)
}

fn cache_masks(contents: usize, size_mbit: f64, cap_mbit: f64) -> Vec<u32> {
    (0..1u32 << contents)
        .filter(|m| m.count_ones() as f64 * size_mbit <= cap_mbit + 1e-9)
        .collect()
}

/// Every feasible (X, Z) of a scenario, via per-station cache masks and
/// per-user association subsets filtered by the model's own checker.
pub fn feasible_assignments(sc: &Scenario) -> Vec<(Array2<u8>, Array2<u8>)> {
    let (n_users, n_bs, n_contents) = (sc.num_users(), sc.num_bs(), sc.num_contents());
    let masks = cache_masks(n_contents, sc.config.content_size_mbit, sc.config.cache_capacity_mbit);
    let mut out = Vec::new();
    let n_x = masks.len().pow(n_bs as u32);
    let n_z = ((1usize << n_bs) - 1).pow(n_users as u32);
    for xi in 0..n_x {
        let mut x = Array2::<u8>::zeros((n_contents, n_bs));
        let mut rest = xi;
        for m in 0..n_bs {
            let mask = masks[rest % masks.len()];
            rest /= masks.len();
            for f in 0..n_contents {
                x[[f, m]] = ((mask >> f) & 1) as u8;
            }
        }
        for zi in 0..n_z {
            let mut z = Array2::<u8>::zeros((n_users, n_bs));
            let mut rest = zi;
            for n in 0..n_users {
                let subset = 1 + rest % ((1 << n_bs) - 1);
                rest /= (1 << n_bs) - 1;
                for m in 0..n_bs {
                    z[[n, m]] = ((subset >> m) & 1) as u8;
                }
            }
            if model::binary_feasible(sc, &x, &z) {
                out.push((x.clone(), z));
            }
        }
    }
    out
}

/// Exhaustive mixed-binary oracle: best min-form objective (Mbit/s) over
/// all feasible assignments, powers re-optimized for each.
pub fn enumerate_best_cost_mbps(sc: &Scenario) -> f64 {
    let mut best = f64::INFINITY;
    for (x, z) in feasible_assignments(sc) {
        if let Ok(sol) = istn_core::subproblem::solve_power(sc, &x, &z) {
            best = best.min(sol.cost_mbps());
        }
    }
    best
}

/// Direct master oracle: min over feasible (X, Z) of the cut envelope.
pub fn master_min_phi_mbps(sc: &Scenario, cuts: &[BendersCut]) -> f64 {
    let mut best = f64::INFINITY;
    for (x, z) in feasible_assignments(sc) {
        let phi = cuts
            .iter()
            .map(|c| c.eval_mbps(sc, &x, &z))
            .fold(f64::NEG_INFINITY, f64::max);
        best = best.min(phi);
    }
    best
}

/// The solver trace in its file format (same columns as the CLI writer).
pub fn trace_csv(rows: &[IterRow]) -> String {
    istn_core::gbd::trace_csv(rows)
}
