//! QUBO minimizers: exact enumeration, simulated annealing, and a client
//! for a remote annealer service, plus the top-ρ feasible extraction that
//! feeds multi-cut generation.

pub mod remote;
pub mod server;

use std::collections::{BinaryHeap, HashSet};
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::qubo::QuboProblem;
use crate::rng::{self, STREAM_SA_BASE};
use rand::Rng;

/// Exact enumeration refuses registers wider than this.
pub const BRUTE_FORCE_LIMIT: usize = 25;
/// Enumeration keeps every state up to this width, the best states beyond.
pub const KEEP_ALL_LIMIT: usize = 16;
pub const KEEP_TOP: usize = 4096;
/// Remote energies may differ from local re-evaluation by at most this.
pub const INTEGRITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("register too wide for exact enumeration: {k} bits (limit {limit})")]
    TooWide { k: usize, limit: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("integrity: sample {index} reports energy {claimed} but re-evaluates to {local}")]
    Integrity { index: usize, claimed: f64, local: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sample {
    pub bits: Vec<u8>,
    pub energy: f64,
    pub multiplicity: u32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SamplerMeta {
    pub reads: usize,
    pub sweeps: usize,
    pub seed: u64,
    pub wall_ms: f64,
}

/// Samples sorted ascending by (energy, bits); identical bit vectors are
/// merged into one entry with summed multiplicity.
#[derive(Clone, Debug, Serialize)]
pub struct SampleSet {
    pub samples: Vec<Sample>,
    pub meta: SamplerMeta,
}

impl SampleSet {
    pub fn best(&self) -> Option<&Sample> {
        self.samples.first()
    }
}

/// Geometric inverse-temperature schedule; None derives the default from
/// the coefficient range (0.1/max|Q| hot, 10/min nonzero |Q| cold).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BetaSchedule {
    pub beta_hot: Option<f64>,
    pub beta_cold: Option<f64>,
}

struct Adjacency {
    diag: Vec<f64>,
    neighbors: Vec<Vec<(usize, f64)>>,
}

fn adjacency(k: usize, terms: &[(usize, usize, f64)]) -> Adjacency {
    let mut diag = vec![0.0; k];
    let mut neighbors: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
    for &(i, j, c) in terms {
        if i == j {
            diag[i] += c;
        } else {
            neighbors[i].push((j, c));
            neighbors[j].push((i, c));
        }
    }
    Adjacency { diag, neighbors }
}

fn eval_terms(offset: f64, terms: &[(usize, usize, f64)], bits: &[u8]) -> f64 {
    offset
        + terms
            .iter()
            .map(|&(i, j, c)| {
                if i == j {
                    c * bits[i] as f64
                } else {
                    c * (bits[i] & bits[j]) as f64
                }
            })
            .sum::<f64>()
}

#[derive(PartialEq)]
struct HeapItem {
    energy: f64,
    pattern: u64,
}

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.energy.total_cmp(&other.energy).then(self.pattern.cmp(&other.pattern))
    }
}

fn pattern_bits(pattern: u64, k: usize) -> Vec<u8> {
    (0..k).map(|i| ((pattern >> i) & 1) as u8).collect()
}

/// Walk all 2^k states in Gray-code order with incremental energy updates,
/// keeping every state for narrow registers and the best `KEEP_TOP`
/// otherwise. Kept energies are re-evaluated from scratch.
fn enumerate_states(
    k: usize,
    offset: f64,
    terms: &[(usize, usize, f64)],
) -> Result<Vec<(Vec<u8>, f64)>, SamplerError> {
    if k > BRUTE_FORCE_LIMIT {
        return Err(SamplerError::TooWide { k, limit: BRUTE_FORCE_LIMIT });
    }
    let adj = adjacency(k, terms);
    let total: u64 = 1 << k;
    let keep = if k <= KEEP_ALL_LIMIT { total as usize } else { KEEP_TOP };
    let mut heap: BinaryHeap<HeapItem> = BinaryHeap::with_capacity(keep + 1);
    let mut bits = vec![0u8; k];
    let mut gray: u64 = 0;
    let mut energy = offset;
    heap.push(HeapItem { energy, pattern: 0 });
    for p in 1..total {
        let b = p.trailing_zeros() as usize;
        let field: f64 = adj.diag[b]
            + adj.neighbors[b].iter().map(|&(j, c)| c * bits[j] as f64).sum::<f64>();
        if bits[b] == 0 {
            energy += field;
        } else {
            energy -= field;
        }
        bits[b] ^= 1;
        gray ^= 1 << b;
        if heap.len() < keep {
            heap.push(HeapItem { energy, pattern: gray });
        } else if heap.peek().map(|top| energy < top.energy).unwrap_or(false) {
            heap.pop();
            heap.push(HeapItem { energy, pattern: gray });
        }
    }
    let mut out: Vec<(Vec<u8>, f64)> = heap
        .into_iter()
        .map(|item| {
            let bits = pattern_bits(item.pattern, k);
            let exact = eval_terms(offset, terms, &bits);
            (bits, exact)
        })
        .collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

/// Exact enumeration of the QUBO; the global minimum comes first.
pub fn brute_force(q: &QuboProblem) -> Result<SampleSet, SamplerError> {
    let start = Instant::now();
    let terms: Vec<(usize, usize, f64)> = q.terms.iter().map(|(&(i, j), &c)| (i, j, c)).collect();
    let states = enumerate_states(q.k, q.offset, &terms)?;
    let samples =
        states.into_iter().map(|(bits, energy)| Sample { bits, energy, multiplicity: 1 }).collect();
    Ok(SampleSet {
        samples,
        meta: SamplerMeta {
            reads: 1 << q.k,
            sweeps: 0,
            seed: 0,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        },
    })
}

fn default_betas(terms: &[(usize, usize, f64)]) -> (f64, f64) {
    let mut max_abs = 0.0f64;
    let mut min_nonzero = f64::INFINITY;
    for &(_, _, c) in terms {
        let a = c.abs();
        if a > 0.0 {
            max_abs = max_abs.max(a);
            min_nonzero = min_nonzero.min(a);
        }
    }
    if max_abs == 0.0 {
        (0.1, 10.0)
    } else {
        (0.1 / max_abs, 10.0 / min_nonzero)
    }
}

/// Independent single-spin-flip Metropolis chains with a geometric β
/// schedule. Each read draws from its own RNG stream, so results do not
/// depend on scheduling order; the merge is a deterministic sort.
pub fn simulated_anneal(
    q: &QuboProblem,
    reads: usize,
    sweeps: usize,
    schedule: BetaSchedule,
    seed: u64,
) -> Result<SampleSet, SamplerError> {
    if reads == 0 || sweeps == 0 {
        return Err(SamplerError::InvalidArgument("reads and sweeps must be at least 1".into()));
    }
    let start = Instant::now();
    let terms: Vec<(usize, usize, f64)> = q.terms.iter().map(|(&(i, j), &c)| (i, j, c)).collect();
    let (hot_default, cold_default) = default_betas(&terms);
    let beta_hot = schedule.beta_hot.unwrap_or(hot_default);
    let beta_cold = schedule.beta_cold.unwrap_or(cold_default);
    if !(beta_hot > 0.0) || !(beta_cold > 0.0) {
        return Err(SamplerError::InvalidArgument("temperatures must be positive".into()));
    }
    let adj = adjacency(q.k, &terms);
    let betas: Vec<f64> = (0..sweeps)
        .map(|s| {
            let t = if sweeps == 1 { 1.0 } else { s as f64 / (sweeps - 1) as f64 };
            beta_hot * (beta_cold / beta_hot).powf(t)
        })
        .collect();

    let k = q.k;
    let finals: Vec<Vec<u8>> = (0..reads)
        .into_par_iter()
        .map(|read| {
            let mut rng = rng::stream(seed, STREAM_SA_BASE + read as u64);
            let mut bits: Vec<u8> = (0..k).map(|_| rng.gen_range(0..=1u8)).collect();
            let mut field: Vec<f64> = (0..k)
                .map(|i| {
                    adj.diag[i]
                        + adj.neighbors[i].iter().map(|&(j, c)| c * bits[j] as f64).sum::<f64>()
                })
                .collect();
            for &beta in &betas {
                for i in 0..k {
                    let delta = if bits[i] == 0 { field[i] } else { -field[i] };
                    let accept = delta <= 0.0 || rng.gen::<f64>() < (-beta * delta).exp();
                    if accept {
                        let sign = if bits[i] == 0 { 1.0 } else { -1.0 };
                        bits[i] ^= 1;
                        for &(j, c) in &adj.neighbors[i] {
                            field[j] += sign * c;
                        }
                    }
                }
            }
            bits
        })
        .collect();

    let mut evaluated: Vec<(Vec<u8>, f64)> =
        finals.into_iter().map(|bits| {
            let e = eval_terms(q.offset, &terms, &bits);
            (bits, e)
        }).collect();
    evaluated.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let mut samples: Vec<Sample> = Vec::new();
    for (bits, energy) in evaluated {
        match samples.last_mut() {
            Some(last) if last.bits == bits => last.multiplicity += 1,
            _ => samples.push(Sample { bits, energy, multiplicity: 1 }),
        }
    }
    Ok(SampleSet {
        samples,
        meta: SamplerMeta {
            reads,
            sweeps,
            seed,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        },
    })
}

/// A feasible master assignment decoded from a sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub x: Array2<u8>,
    pub z: Array2<u8>,
    pub phi_mbps: f64,
    pub energy: f64,
}

/// The up-to-ρ lowest-energy feasible samples, deduplicated on the decoded
/// (X, Z); slack and φ bits do not distinguish candidates.
pub fn top_feasible(set: &SampleSet, q: &QuboProblem, rho: usize) -> Vec<Candidate> {
    assert!(rho >= 1, "rho must be at least 1");
    let mut seen: HashSet<Vec<u8>> = HashSet::new();
    let mut out = Vec::with_capacity(rho);
    for sample in &set.samples {
        let d = q.decode(&sample.bits);
        if !d.feasible {
            continue;
        }
        let key: Vec<u8> = d.x.iter().chain(d.z.iter()).copied().collect();
        if !seen.insert(key) {
            continue;
        }
        out.push(Candidate { x: d.x, z: d.z, phi_mbps: d.phi, energy: sample.energy });
        if out.len() == rho {
            break;
        }
    }
    out
}
