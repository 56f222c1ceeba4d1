//! Decomposition loop: alternate exact convex power subproblems with a
//! binary master over caching and association, accumulating one cut per
//! distinct candidate until the bound gap closes.
//!
//! The master is solved either by constrained enumeration against the raw
//! cuts (exact, desk scale) or by compiling the penalty QUBO and sampling
//! it (annealer path). The upper bound is the running best subproblem
//! optimum; the lower bound is the running maximum of the per-iteration
//! minimum sampled φ̄, which keeps both bound sequences monotone even under
//! a noisy sampler.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, DecisionVars, BPS_PER_MBPS};
use crate::qubo::{self, QuboError, QuboOptions, QuboProblem};
use crate::rng::{self, STREAM_GBD_BASE};
use crate::sampler::{self, BetaSchedule, Candidate, SampleSet, SamplerError};
use crate::scenario::Scenario;
use crate::subproblem::{self, BendersCut, SubproblemError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplerChoice {
    /// Constrained enumeration of the binary master against the raw cuts.
    Exact,
    /// Penalty QUBO minimized by simulated annealing.
    Sa { reads: usize, sweeps: usize },
    /// Penalty QUBO sent to a remote annealer service.
    Remote { endpoint: String, reads: usize, timeout_ms: u64 },
    /// Penalty QUBO enumerated exhaustively (register ≤ 25 bits).
    QuboBrute,
}

impl SamplerChoice {
    fn is_deterministic(&self) -> bool {
        matches!(self, SamplerChoice::Exact | SamplerChoice::QuboBrute)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdOptions {
    /// Cuts pursued per iteration; 1 recovers the single-cut loop.
    pub rho: usize,
    /// Relative gap threshold.
    pub epsilon: f64,
    pub max_iter: usize,
    pub sampler: SamplerChoice,
    pub qubo: QuboOptions,
    pub seed: u64,
    /// Fix the cache placement (baseline schemes); None optimizes X.
    pub clamp_x: Option<Array2<u8>>,
    /// Record wall-clock phase times; leaving this off keeps traces
    /// byte-identical across runs.
    pub record_timings: bool,
}

impl Default for GbdOptions {
    fn default() -> Self {
        Self {
            rho: 5,
            epsilon: 1e-3,
            max_iter: 1000,
            sampler: SamplerChoice::Sa { reads: 128, sweeps: 500 },
            qubo: QuboOptions::default(),
            seed: 0,
            clamp_x: None,
            record_timings: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum GbdError {
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("infeasible instance: {0}")]
    Infeasible(String),
    #[error("no feasible master sample at iteration {iter} (after one 4x resample)")]
    NoFeasibleMaster { iter: usize },
    #[error("exact master enumeration too large: about {combos} assignments")]
    MasterTooLarge { combos: u128 },
    #[error(transparent)]
    Qubo(#[from] QuboError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum SolveStatus {
    /// Gap closed below ε.
    Converged,
    /// Iteration cap reached.
    IterationCap,
    /// Deterministic sampler re-proposed only known candidates: every
    /// further iteration would repeat verbatim, so the loop stops.
    Stalled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IterRow {
    pub iter: usize,
    pub ub_mbps: f64,
    pub lb_mbps: f64,
    pub gap: f64,
    pub cuts_total: usize,
    pub sub_ms: f64,
    pub master_ms: f64,
    pub feasible_samples: usize,
    /// This iteration's minimum sampled φ̄ before running-max bookkeeping.
    pub lb_raw_mbps: f64,
}

/// The per-iteration trace in its file format, one CSV row per round.
pub fn trace_csv(rows: &[IterRow]) -> String {
    use std::fmt::Write as _;
    let mut s =
        String::from("iter,ub_mbps,lb_mbps,gap,cuts_total,sub_ms,master_ms,feasible_samples\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.iter, r.ub_mbps, r.lb_mbps, r.gap, r.cuts_total, r.sub_ms, r.master_ms,
            r.feasible_samples
        )
        .unwrap();
    }
    s
}

#[derive(Clone, Debug)]
pub struct CutRecord {
    pub x: Array2<u8>,
    pub z: Array2<u8>,
    pub cut: BendersCut,
    /// The generating subproblem's optimum, min-form Mbit/s.
    pub sub_opt_mbps: f64,
}

#[derive(Clone, Debug)]
pub struct SolveTrace {
    pub rows: Vec<IterRow>,
    pub status: SolveStatus,
    pub vars: DecisionVars,
    pub ub_mbps: f64,
    pub lb_mbps: f64,
    pub gap: f64,
    pub gap_ub_zero: bool,
    pub q_total_mbps: f64,
    pub q_cache_mbps: f64,
    pub q_backhaul_mbps: f64,
    pub cut_records: Vec<CutRecord>,
    /// Iterations whose best feasible φ̄ sat on the encoding floor,
    /// hinting the φ range clipped the master optimum.
    pub phi_floor_hits: usize,
}

/// Relative optimality gap; with UB = 0 falls back to the absolute
/// difference and sets the flag.
pub fn gap(ub: f64, lb: f64) -> (f64, bool) {
    if ub == 0.0 {
        ((ub - lb).abs(), true)
    } else {
        (((ub - lb) / ub).abs(), false)
    }
}

fn xz_key(x: &Array2<u8>, z: &Array2<u8>) -> Vec<u8> {
    x.iter().chain(z.iter()).copied().collect()
}

fn mix_seed(seed: u64, iter: usize, resample: bool) -> u64 {
    let salt = (iter as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mixed = seed ^ salt;
    if resample {
        mixed ^ 0x8000_0000_0000_0000
    } else {
        mixed
    }
}

/// Per-station association capacity: block limit, tightened by how many
/// minimum-power users the power budget can host.
fn station_capacity(sc: &Scenario, m: usize) -> usize {
    let pmin = sc.user_power_min_w();
    let by_budget = if pmin > 0.0 {
        (sc.bs_power_budget_w(m) / pmin + 1e-9).floor() as usize
    } else {
        usize::MAX
    };
    sc.config.max_blocks.min(by_budget)
}

/// Distinct feasible (X, Z) starters: a deterministic popularity-cache +
/// best-gain-association head, a popularity-spread placement (stations
/// cache different contents; skipped when the cache is clamped), then
/// seeded feasible perturbations up to ρ. May return fewer when the
/// instance admits fewer distinct assignments.
pub fn initial_candidates(
    sc: &Scenario,
    rho: usize,
    seed: u64,
    clamp_x: Option<&Array2<u8>>,
) -> Result<Vec<(Array2<u8>, Array2<u8>)>, GbdError> {
    if rho == 0 {
        return Err(GbdError::InvalidOptions("rho must be at least 1".into()));
    }
    let (n_users, n_bs, n_contents) = (sc.num_users(), sc.num_bs(), sc.num_contents());
    let caps: Vec<usize> = (0..n_bs).map(|m| station_capacity(sc, m)).collect();
    let total: usize = caps.iter().sum();
    if total < n_users {
        return Err(GbdError::Infeasible(format!(
            "stations host at most {total} users, instance has {n_users}"
        )));
    }

    let d = sc.config.content_size_mbit;
    let cache_cap = sc.config.cache_capacity_mbit;
    let head_x = match clamp_x {
        Some(xc) => xc.clone(),
        None => {
            // most popular contents first, as far as capacity allows
            let mut order: Vec<usize> = (0..n_contents).collect();
            order.sort_by(|&a, &b| {
                sc.popularity[b].partial_cmp(&sc.popularity[a]).unwrap().then(a.cmp(&b))
            });
            let mut x = Array2::<u8>::zeros((n_contents, n_bs));
            for m in 0..n_bs {
                let mut used = 0.0;
                for &f in &order {
                    if used + d <= cache_cap + 1e-9 {
                        x[[f, m]] = 1;
                        used += d;
                    }
                }
            }
            x
        }
    };

    // weight-times-rate association against a given placement
    let pmax = sc.user_power_max_w();
    let best_gain_assoc = |x: &Array2<u8>| -> Result<Array2<u8>, GbdError> {
        let mut z = Array2::<u8>::zeros((n_users, n_bs));
        let mut loads = vec![0usize; n_bs];
        for n in 0..n_users {
            let mut best: Option<(f64, usize)> = None;
            for m in 0..n_bs {
                if loads[m] >= caps[m] {
                    continue;
                }
                let score = model::link_weight(sc, x, n, m) * model::rate_bps(sc, n, m, pmax);
                if best.map(|(s, _)| score > s).unwrap_or(true) {
                    best = Some((score, m));
                }
            }
            let (_, m) = best.ok_or_else(|| {
                GbdError::Infeasible(format!("no station can host user {n}"))
            })?;
            z[[n, m]] = 1;
            loads[m] += 1;
        }
        Ok(z)
    };
    let head_z = best_gain_assoc(&head_x)?;

    let mut out = vec![(head_x, head_z)];
    let mut seen: HashSet<Vec<u8>> = out.iter().map(|(x, z)| xz_key(x, z)).collect();

    // extra starter spreading the popularity order across stations, so
    // neighbours cache different contents instead of all racing for the
    // most popular ones
    if clamp_x.is_none() {
        let mut order: Vec<usize> = (0..n_contents).collect();
        order.sort_by(|&a, &b| {
            sc.popularity[b].partial_cmp(&sc.popularity[a]).unwrap().then(a.cmp(&b))
        });
        let mut x = Array2::<u8>::zeros((n_contents, n_bs));
        let mut used = vec![0.0; n_bs];
        for (i, &f) in order.iter().enumerate() {
            let mut m = i % n_bs;
            for _ in 0..n_bs {
                if used[m] + d <= cache_cap + 1e-9 {
                    x[[f, m]] = 1;
                    used[m] += d;
                    break;
                }
                m = (m + 1) % n_bs;
            }
        }
        let z = best_gain_assoc(&x)?;
        if seen.insert(xz_key(&x, &z)) {
            out.push((x, z));
        }
    }

    for t in 1..rho {
        let mut rng = rng::stream(seed, STREAM_GBD_BASE + t as u64);
        for _try in 0..32 {
            let x = match clamp_x {
                Some(xc) => xc.clone(),
                None => {
                    let mut x = Array2::<u8>::zeros((n_contents, n_bs));
                    for m in 0..n_bs {
                        let mut order: Vec<usize> = (0..n_contents).collect();
                        order.shuffle(&mut rng);
                        let mut used = 0.0;
                        for f in order {
                            if used + d <= cache_cap + 1e-9 && rng.gen_bool(0.7) {
                                x[[f, m]] = 1;
                                used += d;
                            }
                        }
                    }
                    x
                }
            };
            let mut z = Array2::<u8>::zeros((n_users, n_bs));
            let mut loads = vec![0usize; n_bs];
            let mut users: Vec<usize> = (0..n_users).collect();
            users.shuffle(&mut rng);
            for n in users {
                let open: Vec<usize> = (0..n_bs).filter(|&m| loads[m] < caps[m]).collect();
                let m = open[rng.gen_range(0..open.len())];
                z[[n, m]] = 1;
                loads[m] += 1;
            }
            if seen.insert(xz_key(&x, &z)) {
                out.push((x, z));
                break;
            }
        }
    }
    Ok(out)
}

struct MasterResult {
    candidates: Vec<Candidate>,
    feasible_samples: usize,
    phi_floor: bool,
    /// Exact master only: envelope minimum over the whole feasible set,
    /// including states that already generated cuts. Sampled masters
    /// leave this unset and the bound comes from the returned candidates.
    lb_override: Option<f64>,
}

fn sample_once(
    q: &QuboProblem,
    opts: &GbdOptions,
    iter: usize,
    resample: bool,
) -> Result<SampleSet, GbdError> {
    let factor = if resample { 4 } else { 1 };
    match &opts.sampler {
        SamplerChoice::Sa { reads, sweeps } => Ok(sampler::simulated_anneal(
            q,
            reads * factor,
            *sweeps,
            BetaSchedule::default(),
            mix_seed(opts.seed, iter, resample),
        )?),
        SamplerChoice::Remote { endpoint, reads, timeout_ms } => Ok(sampler::remote::remote_sample(
            endpoint,
            q,
            reads * factor,
            Duration::from_millis(*timeout_ms),
        )?),
        SamplerChoice::QuboBrute => Ok(sampler::brute_force(q)?),
        SamplerChoice::Exact => unreachable!("exact master does not sample"),
    }
}

fn qubo_master(
    sc: &Scenario,
    cuts: &[BendersCut],
    opts: &GbdOptions,
    iter: usize,
) -> Result<Option<MasterResult>, GbdError> {
    let q = qubo::build_master_qubo(sc, cuts, opts.clamp_x.as_ref(), &opts.qubo)?;
    for attempt in 0..2 {
        let resample = attempt == 1;
        let set = sample_once(&q, opts, iter, resample)?;
        let top = sampler::top_feasible(&set, &q, opts.rho);
        if top.is_empty() {
            if opts.sampler.is_deterministic() {
                // re-running an exhaustive sampler cannot find more
                return Ok(None);
            }
            continue;
        }
        let feasible_samples: usize = set
            .samples
            .iter()
            .filter(|s| q.decode(&s.bits).feasible)
            .map(|s| s.multiplicity as usize)
            .sum();
        let min_phi = top.iter().map(|c| c.phi_mbps).fold(f64::INFINITY, f64::min);
        let phi_floor = min_phi <= q.phi.min_value() + q.phi.step / 2.0;
        return Ok(Some(MasterResult {
            candidates: top,
            feasible_samples,
            phi_floor,
            lb_override: None,
        }));
    }
    Ok(None)
}

fn exact_master(
    sc: &Scenario,
    cuts: &[BendersCut],
    opts: &GbdOptions,
    visited: &HashSet<Vec<u8>>,
) -> Result<MasterResult, GbdError> {
    let (n_users, n_bs, n_contents) = (sc.num_users(), sc.num_bs(), sc.num_contents());
    let d = sc.config.content_size_mbit;
    let cache_cap = sc.config.cache_capacity_mbit;

    // admissible cache patterns per station
    let station_masks: Vec<Vec<u32>> = match &opts.clamp_x {
        Some(xc) => (0..n_bs)
            .map(|m| {
                let mask =
                    (0..n_contents).filter(|&f| xc[[f, m]] != 0).fold(0u32, |acc, f| acc | 1 << f);
                vec![mask]
            })
            .collect(),
        None => {
            let all: Vec<u32> = (0..1u32 << n_contents)
                .filter(|mask| mask.count_ones() as f64 * d <= cache_cap + 1e-9)
                .collect();
            vec![all; n_bs]
        }
    };
    let z_subsets: Vec<u32> = (1..1u32 << n_bs).collect();
    let x_combos: u128 = station_masks.iter().map(|v| v.len() as u128).product();
    let z_combos: u128 = (z_subsets.len() as u128).pow(n_users as u32);
    let combos = x_combos.saturating_mul(z_combos);
    if combos > 2_000_000 {
        return Err(GbdError::MasterTooLarge { combos });
    }

    let mut kept: Vec<(f64, Array2<u8>, Array2<u8>)> = Vec::new();
    let mut feasible_samples = 0usize;
    let mut envelope_min = f64::INFINITY;
    let max_blocks = sc.config.max_blocks;
    let mut x_idx = vec![0usize; n_bs];
    loop {
        let mut x = Array2::<u8>::zeros((n_contents, n_bs));
        for m in 0..n_bs {
            let mask = station_masks[m][x_idx[m]];
            for f in 0..n_contents {
                x[[f, m]] = ((mask >> f) & 1) as u8;
            }
        }
        let mut z_idx = vec![0usize; n_users];
        'z_loop: loop {
            let mut loads = vec![0usize; n_bs];
            let mut ok = true;
            for n in 0..n_users {
                let subset = z_subsets[z_idx[n]];
                for m in 0..n_bs {
                    if (subset >> m) & 1 == 1 {
                        loads[m] += 1;
                        if loads[m] > max_blocks {
                            ok = false;
                        }
                    }
                }
            }
            if ok {
                feasible_samples += 1;
                let mut z = Array2::<u8>::zeros((n_users, n_bs));
                for n in 0..n_users {
                    for m in 0..n_bs {
                        z[[n, m]] = ((z_subsets[z_idx[n]] >> m) & 1) as u8;
                    }
                }
                let phi = cuts
                    .iter()
                    .map(|c| c.eval_mbps(sc, &x, &z))
                    .fold(f64::NEG_INFINITY, f64::max);
                envelope_min = envelope_min.min(phi);
                // Only states without a cut of their own are worth
                // proposing again; the bound above still sees them all.
                let worse_than_kept = kept.len() == opts.rho
                    && kept.last().map(|(p, _, _)| phi > *p).unwrap_or(false);
                if !worse_than_kept && !visited.contains(&xz_key(&x, &z)) {
                    let pos = kept
                        .binary_search_by(|(p, kx, kz)| {
                            p.total_cmp(&phi).then_with(|| {
                                xz_key(kx, kz).cmp(&xz_key(&x, &z))
                            })
                        })
                        .unwrap_or_else(|e| e);
                    kept.insert(pos, (phi, x.clone(), z));
                    kept.truncate(opts.rho);
                }
            }
            // odometer over user subsets
            for n in 0..n_users {
                z_idx[n] += 1;
                if z_idx[n] < z_subsets.len() {
                    continue 'z_loop;
                }
                z_idx[n] = 0;
            }
            break;
        }
        let mut advanced = false;
        for m in 0..n_bs {
            x_idx[m] += 1;
            if x_idx[m] < station_masks[m].len() {
                advanced = true;
                break;
            }
            x_idx[m] = 0;
        }
        if !advanced {
            break;
        }
    }

    let candidates = kept
        .into_iter()
        .map(|(phi, x, z)| Candidate { x, z, phi_mbps: phi, energy: phi })
        .collect();
    Ok(MasterResult {
        candidates,
        feasible_samples,
        phi_floor: false,
        lb_override: Some(envelope_min),
    })
}

fn solve_master(
    sc: &Scenario,
    cuts: &[BendersCut],
    opts: &GbdOptions,
    iter: usize,
    visited: &HashSet<Vec<u8>>,
) -> Result<Option<MasterResult>, GbdError> {
    match &opts.sampler {
        SamplerChoice::Exact => exact_master(sc, cuts, opts, visited).map(Some),
        _ => qubo_master(sc, cuts, opts, iter),
    }
}

fn elapsed_ms(from: Instant) -> f64 {
    from.elapsed().as_secs_f64() * 1e3
}

/// The decomposition loop. Terminates when the gap closes below ε, the
/// iteration cap is hit, or a deterministic master runs out of new
/// proposals: the exact master skips states that already carry a cut
/// (the accumulated cuts overestimate re-visited states, so re-proposing
/// them would freeze the incumbent), and a brute-forced QUBO master
/// stalls once its top samples are all already cut.
pub fn run(sc: &Scenario, opts: &GbdOptions) -> Result<SolveTrace, GbdError> {
    if opts.rho == 0 {
        return Err(GbdError::InvalidOptions("rho must be at least 1".into()));
    }
    if !(opts.epsilon > 0.0) {
        return Err(GbdError::InvalidOptions("epsilon must be positive".into()));
    }
    if opts.max_iter == 0 {
        return Err(GbdError::InvalidOptions("max_iter must be at least 1".into()));
    }

    let mut candidates = initial_candidates(sc, opts.rho, opts.seed, opts.clamp_x.as_ref())?;
    let mut cuts: Vec<BendersCut> = Vec::new();
    let mut cut_records: Vec<CutRecord> = Vec::new();
    let mut attempted: HashSet<Vec<u8>> = HashSet::new();
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut best: Option<DecisionVars> = None;
    let mut rows: Vec<IterRow> = Vec::new();
    let mut phi_floor_hits = 0usize;
    let mut status = SolveStatus::IterationCap;

    for iter in 1..=opts.max_iter {
        let fresh: Vec<(Array2<u8>, Array2<u8>)> = candidates
            .iter()
            .filter(|(x, z)| attempted.insert(xz_key(x, z)))
            .cloned()
            .collect();
        if fresh.is_empty() && opts.sampler.is_deterministic() {
            status = SolveStatus::Stalled;
            break;
        }
        let t_sub = Instant::now();
        let solves: Vec<_> = fresh
            .par_iter()
            .map(|(x, z)| subproblem::solve_power(sc, x, z))
            .collect();
        for ((x, z), solved) in fresh.iter().zip(solves) {
            let sol = match solved {
                Ok(s) => s,
                Err(SubproblemError::Infeasible { .. }) => continue,
            };
            let cost = sol.cost_mbps();
            if cost < ub {
                ub = cost;
                best = Some(DecisionVars { x: x.clone(), z: z.clone(), p: sol.p.clone() });
            }
            let cut = subproblem::make_cut(sc, &sol, cuts.len());
            cut_records.push(CutRecord {
                x: x.clone(),
                z: z.clone(),
                cut: cut.clone(),
                sub_opt_mbps: cost,
            });
            cuts.push(cut);
        }
        let sub_ms = if opts.record_timings { elapsed_ms(t_sub) } else { 0.0 };
        if cuts.is_empty() {
            return Err(GbdError::Infeasible(
                "every initial candidate failed the power subproblem".into(),
            ));
        }

        let t_master = Instant::now();
        let master = solve_master(sc, &cuts, opts, iter, &attempted)?
            .ok_or(GbdError::NoFeasibleMaster { iter })?;
        let master_ms = if opts.record_timings { elapsed_ms(t_master) } else { 0.0 };
        if master.phi_floor {
            phi_floor_hits += 1;
        }
        let lb_raw = master.lb_override.unwrap_or_else(|| {
            master.candidates.iter().map(|c| c.phi_mbps).fold(f64::INFINITY, f64::min)
        });
        lb = lb.max(lb_raw);
        let (g, _) = gap(ub, lb);
        rows.push(IterRow {
            iter,
            ub_mbps: ub,
            lb_mbps: lb,
            gap: g,
            cuts_total: cuts.len(),
            sub_ms,
            master_ms,
            feasible_samples: master.feasible_samples,
            lb_raw_mbps: lb_raw,
        });
        if g <= opts.epsilon {
            status = SolveStatus::Converged;
            break;
        }
        if master.candidates.is_empty() {
            // the exact master has cut every feasible state
            status = SolveStatus::Stalled;
            break;
        }
        candidates = master.candidates.into_iter().map(|c| (c.x, c.z)).collect();
    }

    let vars = best.ok_or_else(|| GbdError::Infeasible("no incumbent found".into()))?;
    let split = model::throughput_split(sc, &vars);
    let lambda = sc.config.tradeoff_lambda;
    let (final_gap, gap_ub_zero) = gap(ub, lb);
    Ok(SolveTrace {
        rows,
        status,
        vars,
        ub_mbps: ub,
        lb_mbps: lb,
        gap: final_gap,
        gap_ub_zero,
        q_total_mbps: split.weighted_bps(lambda) / BPS_PER_MBPS,
        q_cache_mbps: split.cache_bps / BPS_PER_MBPS,
        q_backhaul_mbps: split.backhaul_bps / BPS_PER_MBPS,
        cut_records,
        phi_floor_hits,
    })
}

#[cfg(test)]
mod tests;
