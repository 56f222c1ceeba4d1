//! Compile the master problem (epigraph objective, cache capacity, serve-
//! everyone, block capacity, accumulated Benders cuts) into a QUBO, and
//! decode sampler bit vectors back to assignments.
//!
//! Cut coefficients are rescaled to Mbit/s and rounded onto a fixed
//! power-of-two grid so every penalized constraint has an integer-valued
//! residual; each residual is divided by its collective gcd before slack
//! bits are allocated, which keeps registers narrow (a cache constraint
//! whose item sizes equal the capacity needs one slack bit, not fifteen).
//! Penalties count in gcd-normalized integer units: any violation costs at
//! least its family's ξ, which the default rule sets above the whole
//! objective range, so infeasible states can never undercut feasible ones.

pub mod phi;

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, BPS_PER_MBPS};
use crate::scenario::Scenario;
use crate::subproblem::BendersCut;
pub use phi::{encode_phi, PhiSpec};

#[derive(Debug, Error)]
pub enum QuboError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("phi encoding needs {needed} bits, over the budget of {max}")]
    EncodingTooWide { needed: usize, max: usize },
    #[error("constraint {0} cannot be satisfied by any binary assignment")]
    InvalidConstraint(String),
    #[error("phi range cannot reach cut {cut}: its lower-bound exceeds every encodable phi")]
    EncodingRange { cut: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Segment {
    pub offset: usize,
    pub len: usize,
}

impl Segment {
    fn new(offset: usize, len: usize) -> Self {
        Self { offset, len }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NamedSegment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// Bit layout of the master register: cache bits, association bits, product
/// bits, φ bits, then per-constraint slack runs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegisterLayout {
    pub num_contents: usize,
    pub num_users: usize,
    pub num_bs: usize,
    pub x: Segment,
    pub z: Segment,
    pub y: Segment,
    pub phi: Segment,
    /// (user, station) pair served by each product bit, ascending.
    pub y_pairs: Vec<(usize, usize)>,
    pub slacks: Vec<NamedSegment>,
    pub k: usize,
}

impl RegisterLayout {
    /// Index of cache bit x[f, m]; None when X is clamped out of the register.
    pub fn x_bit(&self, f: usize, m: usize) -> Option<usize> {
        (self.x.len > 0).then(|| self.x.offset + f * self.num_bs + m)
    }

    pub fn z_bit(&self, n: usize, m: usize) -> usize {
        self.z.offset + n * self.num_bs + m
    }
}

/// Penalty weights actually applied, one scalar per constraint family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PenaltyValues {
    pub cache: f64,
    pub serve: f64,
    pub blocks: f64,
    pub cut: f64,
    pub and_gadget: f64,
}

/// A Benders cut with coefficients rounded onto the integer grid
/// (units: `grid` Mbit/s per integer step).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaledCut {
    pub constant: i64,
    pub z_coeff: Array2<i64>,
    pub xz_coeff: Array2<i64>,
}

impl ScaledCut {
    fn eval_int(&self, requests: &[usize], x: &Array2<u8>, z: &Array2<u8>) -> i64 {
        let (n_users, n_bs) = self.z_coeff.dim();
        let mut v = self.constant;
        for n in 0..n_users {
            for m in 0..n_bs {
                if z[[n, m]] != 0 {
                    v += self.z_coeff[[n, m]];
                    if x[[requests[n], m]] != 0 {
                        v += self.xz_coeff[[n, m]];
                    }
                }
            }
        }
        v
    }
}

/// One penalized constraint in normalized integer form: residual =
/// constant + Σ coeff·bit (slack bits included); penalty = ξ·residual².
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualSpec {
    pub name: String,
    pub constant: i64,
    pub bits: Vec<(usize, i64)>,
    pub xi: f64,
}

impl ResidualSpec {
    pub fn residual(&self, bits: &[u8]) -> i64 {
        self.constant + self.bits.iter().map(|&(i, c)| c * bits[i] as i64).sum::<i64>()
    }
}

#[derive(Clone, Debug)]
pub struct QuboProblem {
    pub k: usize,
    pub offset: f64,
    /// Upper-triangular coefficients, key (i, j) with i ≤ j.
    pub terms: BTreeMap<(usize, usize), f64>,
    pub layout: RegisterLayout,
    pub phi: PhiSpec,
    pub xi: PenaltyValues,
    /// Mbit/s per integer grid step of the scaled cuts.
    pub grid: f64,
    pub scaled_cuts: Vec<ScaledCut>,
    pub residuals: Vec<ResidualSpec>,
    /// AND-gadget bit triples (x-bit, z-bit, y-bit).
    pub gadgets: Vec<(usize, usize, usize)>,
    pub requests: Vec<usize>,
    pub clamp_x: Option<Array2<u8>>,
    pub content_size_mbit: f64,
    pub cache_capacity_mbit: f64,
    pub max_blocks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecodedSample {
    pub x: Array2<u8>,
    pub z: Array2<u8>,
    pub phi: f64,
    pub feasible: bool,
    pub penalty_energy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuboOptions {
    /// φ decode resolution, Mbit/s.
    pub phi_resolution_mbps: f64,
    /// Override for the φ range; default [−max conceivable Q^T, 0].
    pub phi_range_mbps: Option<(f64, f64)>,
    /// Cut-coefficient rounding grid, Mbit/s (forced to a power of two).
    pub coeff_grid_mbps: f64,
    pub max_phi_bits: usize,
    pub xi_cache: Option<f64>,
    pub xi_serve: Option<f64>,
    pub xi_blocks: Option<f64>,
    pub xi_cut: Option<f64>,
    pub xi_and: Option<f64>,
}

impl Default for QuboOptions {
    fn default() -> Self {
        Self {
            phi_resolution_mbps: 0.0625,
            phi_range_mbps: None,
            coeff_grid_mbps: 1.0 / 1024.0,
            max_phi_bits: 48,
            xi_cache: None,
            xi_serve: None,
            xi_blocks: None,
            xi_cut: None,
            xi_and: None,
        }
    }
}

/// Loose upper bound on the weighted throughput: every link served at the
/// per-user maximum power with weight one. Mbit/s.
pub fn max_conceivable_q_mbps(sc: &Scenario) -> f64 {
    let pmax = sc.user_power_max_w();
    let mut total = 0.0;
    for n in 0..sc.num_users() {
        for m in 0..sc.num_bs() {
            total += model::rate_bps(sc, n, m, pmax);
        }
    }
    total / BPS_PER_MBPS
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Expansion of one `lhs ≤ bound` constraint into quadratic penalty terms
/// over the lhs bits plus freshly allocated slack bits starting at
/// `slack_offset`. Returns the upper-triangular terms, a constant offset,
/// the number of slack bits used, and the normalized residual record.
#[derive(Clone, Debug)]
pub struct Penalized {
    pub terms: Vec<(usize, usize, f64)>,
    pub offset: f64,
    pub slack_bits: usize,
    pub residual: ResidualSpec,
}

pub fn penalize_leq(
    lhs: &[(usize, i64)],
    constant: i64,
    bound: i64,
    xi: f64,
    slack_offset: usize,
    name: &str,
) -> Result<Penalized, QuboError> {
    if xi <= 0.0 {
        return Err(QuboError::InvalidArgument("penalty weight must be positive".into()));
    }
    let shifted = constant - bound;
    let mut g = shifted;
    for &(_, c) in lhs {
        g = gcd(g, c);
    }
    let g = if g == 0 { 1 } else { g };
    let c0 = shifted / g;
    let coeffs: Vec<(usize, i64)> = lhs
        .iter()
        .filter(|&&(_, c)| c != 0)
        .map(|&(bit, c)| (bit, c / g))
        .collect();
    let min_lhs: i64 = c0 + coeffs.iter().map(|&(_, c)| c.min(0)).sum::<i64>();
    if min_lhs > 0 {
        return Err(QuboError::InvalidConstraint(name.to_string()));
    }
    let max_slack = -min_lhs;
    let slack_bits = if max_slack == 0 { 0 } else { (64 - (max_slack as u64).leading_zeros()) as usize };
    let mut all = coeffs;
    for l in 0..slack_bits {
        all.push((slack_offset + l, 1i64 << l));
    }
    let mut terms = Vec::with_capacity(all.len() * (all.len() + 1) / 2);
    for (idx, &(i, a)) in all.iter().enumerate() {
        terms.push((i, i, xi * (a * a) as f64 + 2.0 * xi * (c0 * a) as f64));
        for &(j, b) in &all[idx + 1..] {
            let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
            terms.push((lo, hi, 2.0 * xi * (a * b) as f64));
        }
    }
    let residual = ResidualSpec { name: name.to_string(), constant: c0, bits: all, xi };
    Ok(Penalized { terms, offset: xi * (c0 * c0) as f64, slack_bits, residual })
}

/// Degree-reduction gadget tying y = x∧z: penalty ξ·(x·z − 2(x+z)·y + 3y),
/// zero iff y equals the product, ≥ ξ otherwise.
pub fn reduce_product(x_bit: usize, z_bit: usize, y_bit: usize, xi: f64) -> Vec<(usize, usize, f64)> {
    let ord = |a: usize, b: usize| if a <= b { (a, b) } else { (b, a) };
    let (xz0, xz1) = ord(x_bit, z_bit);
    let (xy0, xy1) = ord(x_bit, y_bit);
    let (zy0, zy1) = ord(z_bit, y_bit);
    vec![
        (xz0, xz1, xi),
        (xy0, xy1, -2.0 * xi),
        (zy0, zy1, -2.0 * xi),
        (y_bit, y_bit, 3.0 * xi),
    ]
}

fn pow2_at_most(x: f64) -> f64 {
    2f64.powi(x.log2().floor() as i32)
}

/// Compile the master problem over the accumulated cuts into a QUBO.
/// With `clamp_x`, the cache placement is fixed: x bits leave the register
/// and cut product terms fold into the association coefficients.
pub fn build_master_qubo(
    sc: &Scenario,
    cuts: &[BendersCut],
    clamp_x: Option<&Array2<u8>>,
    opts: &QuboOptions,
) -> Result<QuboProblem, QuboError> {
    if cuts.is_empty() {
        return Err(QuboError::InvalidArgument("at least one cut is required".into()));
    }
    let grid = pow2_at_most(opts.coeff_grid_mbps);
    if !(grid > 0.0) {
        return Err(QuboError::InvalidArgument("coefficient grid must be positive".into()));
    }
    if opts.phi_resolution_mbps < grid {
        return Err(QuboError::InvalidArgument(
            "phi resolution must not be finer than the coefficient grid".into(),
        ));
    }
    let (n_users, n_bs, n_contents) = (sc.num_users(), sc.num_bs(), sc.num_contents());
    if let Some(xc) = clamp_x {
        if xc.dim() != (n_contents, n_bs) {
            return Err(QuboError::InvalidArgument("clamped X has the wrong shape".into()));
        }
        for m in 0..n_bs {
            let used: f64 =
                (0..n_contents).map(|f| xc[[f, m]] as f64 * sc.config.content_size_mbit).sum();
            if used > sc.config.cache_capacity_mbit * (1.0 + 1e-9) {
                return Err(QuboError::InvalidArgument(format!(
                    "clamped X violates cache capacity at station {m}"
                )));
            }
        }
    }

    let (lo, hi) = opts
        .phi_range_mbps
        .unwrap_or_else(|| (-max_conceivable_q_mbps(sc).max(1.0), 0.0));
    let phi = encode_phi(lo, hi, opts.phi_resolution_mbps, opts.max_phi_bits)?;

    let scale = |v: f64| (v / grid).round() as i64;
    let scaled_cuts: Vec<ScaledCut> = cuts
        .iter()
        .map(|c| ScaledCut {
            constant: scale(c.constant_mbps),
            z_coeff: c.coeff_z_mbps.map(|&v| scale(v)),
            xz_coeff: c.coeff_xz_mbps.map(|&v| scale(v)),
        })
        .collect();

    let y_pairs: Vec<(usize, usize)> = if clamp_x.is_some() {
        Vec::new()
    } else {
        let mut pairs = Vec::new();
        for n in 0..n_users {
            for m in 0..n_bs {
                if scaled_cuts.iter().any(|c| c.xz_coeff[[n, m]] != 0) {
                    pairs.push((n, m));
                }
            }
        }
        pairs
    };

    let x_len = if clamp_x.is_some() { 0 } else { n_contents * n_bs };
    let x_seg = Segment::new(0, x_len);
    let z_seg = Segment::new(x_len, n_users * n_bs);
    let y_seg = Segment::new(z_seg.offset + z_seg.len, y_pairs.len());
    let phi_seg = Segment::new(y_seg.offset + y_seg.len, phi.num_bits());
    let mut layout = RegisterLayout {
        num_contents: n_contents,
        num_users: n_users,
        num_bs: n_bs,
        x: x_seg,
        z: z_seg,
        y: y_seg,
        phi: phi_seg,
        y_pairs: y_pairs.clone(),
        slacks: Vec::new(),
        k: phi_seg.offset + phi_seg.len,
    };

    let s_phi: f64 = phi.weights.iter().map(|w| w.abs()).sum();
    let xi_default = 2.0 * s_phi + 1.0;
    let xi = PenaltyValues {
        cache: opts.xi_cache.unwrap_or(xi_default),
        serve: opts.xi_serve.unwrap_or(xi_default),
        blocks: opts.xi_blocks.unwrap_or(xi_default),
        cut: opts.xi_cut.unwrap_or(xi_default),
        and_gadget: opts.xi_and.unwrap_or(xi_default),
    };

    let mut terms: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut offset = 0.0;
    let add = |terms: &mut BTreeMap<(usize, usize), f64>, i: usize, j: usize, v: f64| {
        if v != 0.0 {
            *terms.entry((i, j)).or_insert(0.0) += v;
        }
    };

    // objective: φ̄(w) in Mbit/s
    for (idx, w) in phi.weights.iter().enumerate() {
        add(&mut terms, phi_seg.offset + idx, phi_seg.offset + idx, *w);
    }

    // product gadgets
    let mut gadgets = Vec::with_capacity(y_pairs.len());
    for (pair_idx, &(n, m)) in y_pairs.iter().enumerate() {
        let xb = layout.x_bit(sc.requests[n], m).expect("x bits present when unclamped");
        let zb = layout.z_bit(n, m);
        let yb = y_seg.offset + pair_idx;
        for (i, j, v) in reduce_product(xb, zb, yb, xi.and_gadget) {
            add(&mut terms, i, j, v);
        }
        gadgets.push((xb, zb, yb));
    }

    let mut residuals = Vec::new();
    let apply = |terms: &mut BTreeMap<(usize, usize), f64>,
                 offset: &mut f64,
                 layout: &mut RegisterLayout,
                 residuals: &mut Vec<ResidualSpec>,
                 pen: Penalized,
                 name: String| {
        for (i, j, v) in pen.terms {
            add(terms, i, j, v);
        }
        *offset += pen.offset;
        layout.slacks.push(NamedSegment { name, offset: layout.k, len: pen.slack_bits });
        layout.k += pen.slack_bits;
        residuals.push(pen.residual);
    };

    // cache capacity per station (skipped when X is clamped)
    if clamp_x.is_none() {
        let d = scale(sc.config.content_size_mbit);
        let cap = scale(sc.config.cache_capacity_mbit);
        for m in 0..n_bs {
            let lhs: Vec<(usize, i64)> =
                (0..n_contents).map(|f| (layout.x_bit(f, m).unwrap(), d)).collect();
            let name = format!("cache[{m}]");
            let pen = penalize_leq(&lhs, 0, cap, xi.cache, layout.k, &name)?;
            apply(&mut terms, &mut offset, &mut layout, &mut residuals, pen, name);
        }
    }

    // serve-everyone per user: −Σ_m z ≤ −1
    for n in 0..n_users {
        let lhs: Vec<(usize, i64)> = (0..n_bs).map(|m| (layout.z_bit(n, m), -1)).collect();
        let name = format!("serve[{n}]");
        let pen = penalize_leq(&lhs, 0, -1, xi.serve, layout.k, &name)?;
        apply(&mut terms, &mut offset, &mut layout, &mut residuals, pen, name);
    }

    // block capacity per station: Σ_n z ≤ I
    for m in 0..n_bs {
        let lhs: Vec<(usize, i64)> = (0..n_users).map(|n| (layout.z_bit(n, m), 1)).collect();
        let name = format!("blocks[{m}]");
        let pen = penalize_leq(&lhs, 0, sc.config.max_blocks as i64, xi.blocks, layout.k, &name)?;
        apply(&mut terms, &mut offset, &mut layout, &mut residuals, pen, name);
    }

    // one epigraph penalty per cut: cut(X,Z) − φ̄ ≤ 0
    let phi_scaled: Vec<i64> = phi.weights.iter().map(|w| scale(*w)).collect();
    for (l, sc_cut) in scaled_cuts.iter().enumerate() {
        let mut lhs: Vec<(usize, i64)> = Vec::new();
        let cut_const = sc_cut.constant;
        for n in 0..n_users {
            for m in 0..n_bs {
                let mut zc = sc_cut.z_coeff[[n, m]];
                if let Some(xc) = clamp_x {
                    if xc[[sc.requests[n], m]] != 0 {
                        zc += sc_cut.xz_coeff[[n, m]];
                    }
                } else if sc_cut.xz_coeff[[n, m]] != 0 {
                    let pair_idx = y_pairs.binary_search(&(n, m)).expect("pair allocated");
                    lhs.push((y_seg.offset + pair_idx, sc_cut.xz_coeff[[n, m]]));
                }
                if zc != 0 {
                    lhs.push((layout.z_bit(n, m), zc));
                }
            }
        }
        for (idx, w) in phi_scaled.iter().enumerate() {
            if *w != 0 {
                lhs.push((phi_seg.offset + idx, -w));
            }
        }
        let name = format!("cut[{l}]");
        let pen = penalize_leq(&lhs, cut_const, 0, xi.cut, layout.k, &name).map_err(|e| match e {
            QuboError::InvalidConstraint(_) => QuboError::EncodingRange { cut: l },
            other => other,
        })?;
        apply(&mut terms, &mut offset, &mut layout, &mut residuals, pen, name);
    }

    Ok(QuboProblem {
        k: layout.k,
        offset,
        terms,
        layout,
        phi,
        xi,
        grid,
        scaled_cuts,
        residuals,
        gadgets,
        requests: sc.requests.clone(),
        clamp_x: clamp_x.cloned(),
        content_size_mbit: sc.config.content_size_mbit,
        cache_capacity_mbit: sc.config.cache_capacity_mbit,
        max_blocks: sc.config.max_blocks,
    })
}

impl QuboProblem {
    pub fn energy(&self, bits: &[u8]) -> f64 {
        debug_assert_eq!(bits.len(), self.k);
        let mut e = self.offset;
        for (&(i, j), &c) in &self.terms {
            if i == j {
                e += c * bits[i] as f64;
            } else {
                e += c * (bits[i] & bits[j]) as f64;
            }
        }
        e
    }

    /// Value of cut `idx` at a binary assignment, Mbit/s on the grid.
    pub fn cut_value_mbps(&self, idx: usize, x: &Array2<u8>, z: &Array2<u8>) -> f64 {
        self.scaled_cuts[idx].eval_int(&self.requests, x, z) as f64 * self.grid
    }

    /// Split the register and check master feasibility of the decoded
    /// assignment: hard constraints on (X, Z), honest product bits, and φ̄
    /// reaching every cut within one resolution step.
    pub fn decode(&self, bits: &[u8]) -> DecodedSample {
        assert_eq!(bits.len(), self.k, "register width mismatch");
        let l = &self.layout;
        let x = match &self.clamp_x {
            Some(xc) => xc.clone(),
            None => Array2::from_shape_fn((l.num_contents, l.num_bs), |(f, m)| {
                bits[l.x_bit(f, m).unwrap()]
            }),
        };
        let z = Array2::from_shape_fn((l.num_users, l.num_bs), |(n, m)| bits[l.z_bit(n, m)]);
        let phi_bits = &bits[l.phi.offset..l.phi.offset + l.phi.len];
        let phi = self.phi.decode(phi_bits);

        let mut feasible = true;
        for m in 0..l.num_bs {
            let used: f64 =
                (0..l.num_contents).map(|f| x[[f, m]] as f64 * self.content_size_mbit).sum();
            if used > self.cache_capacity_mbit * (1.0 + 1e-9) + 1e-9 {
                feasible = false;
            }
            let served: usize = (0..l.num_users).map(|n| z[[n, m]] as usize).sum();
            if served > self.max_blocks {
                feasible = false;
            }
        }
        for n in 0..l.num_users {
            if (0..l.num_bs).all(|m| z[[n, m]] == 0) {
                feasible = false;
            }
        }
        for (pair_idx, &(n, m)) in l.y_pairs.iter().enumerate() {
            let want = x[[self.requests[n], m]] & z[[n, m]];
            if bits[l.y.offset + pair_idx] != want {
                feasible = false;
            }
        }
        if feasible {
            for idx in 0..self.scaled_cuts.len() {
                if phi < self.cut_value_mbps(idx, &x, &z) - self.phi.resolution - 1e-9 {
                    feasible = false;
                    break;
                }
            }
        }
        let penalty_energy = self.energy(bits) - phi;
        DecodedSample { x, z, phi, feasible, penalty_energy }
    }

    /// Wire payload for the remote sampler protocol.
    pub fn to_wire_json(&self, reads: usize) -> String {
        #[derive(Serialize)]
        struct Wire<'a> {
            k: usize,
            offset: f64,
            terms: Vec<(usize, usize, f64)>,
            layout: &'a RegisterLayout,
            reads: usize,
        }
        let wire = Wire {
            k: self.k,
            offset: self.offset,
            terms: self.terms.iter().map(|(&(i, j), &c)| (i, j, c)).collect(),
            layout: &self.layout,
            reads,
        };
        serde_json::to_string(&wire).expect("wire payload serializes")
    }
}
