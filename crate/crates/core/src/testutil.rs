//! Shared unit-test fixtures: desk-size scenarios, hand-made cuts, and
//! bare QUBO instances detached from any scenario.

use ndarray::Array2;

use crate::qubo::{encode_phi, PenaltyValues, QuboProblem, RegisterLayout, Segment};
use crate::scenario::{Scenario, ScenarioConfig};
use crate::subproblem::BendersCut;

pub(crate) fn tiny_config(
    users: usize,
    tbs: usize,
    contents: usize,
    blocks: usize,
) -> ScenarioConfig {
    ScenarioConfig {
        num_users: users,
        num_satellites: 0,
        num_tbs: tbs,
        num_contents: contents,
        max_blocks: blocks,
        bandwidth_per_block_hz: 2e4,
        rng_seed: 7,
        ..Default::default()
    }
}

pub(crate) fn tiny_scenario(users: usize, tbs: usize, contents: usize, blocks: usize) -> Scenario {
    Scenario::generate(tiny_config(users, tbs, contents, blocks)).unwrap()
}

pub(crate) fn uniform_cut(
    sc: &Scenario,
    constant: f64,
    cz: f64,
    cxz: f64,
    id: usize,
) -> BendersCut {
    let dim = (sc.num_users(), sc.num_bs());
    BendersCut {
        id,
        constant_mbps: constant,
        coeff_z_mbps: Array2::from_elem(dim, cz),
        coeff_xz_mbps: Array2::from_elem(dim, cxz),
    }
}

/// A QUBO with the given terms and no scenario attached; only `k`,
/// `offset`, `terms`, and `energy` are meaningful.
pub(crate) fn toy_qubo(k: usize, offset: f64, terms: &[(usize, usize, f64)]) -> QuboProblem {
    let empty = Segment { offset: 0, len: 0 };
    QuboProblem {
        k,
        offset,
        terms: terms.iter().map(|&(i, j, c)| ((i, j), c)).collect(),
        layout: RegisterLayout {
            num_contents: 0,
            num_users: 0,
            num_bs: 0,
            x: empty,
            z: empty,
            y: empty,
            phi: empty,
            y_pairs: Vec::new(),
            slacks: Vec::new(),
            k,
        },
        phi: encode_phi(-1.0, 0.0, 1.0, 8).unwrap(),
        xi: PenaltyValues { cache: 1.0, serve: 1.0, blocks: 1.0, cut: 1.0, and_gadget: 1.0 },
        grid: 1.0 / 1024.0,
        scaled_cuts: Vec::new(),
        residuals: Vec::new(),
        gadgets: Vec::new(),
        requests: Vec::new(),
        clamp_x: None,
        content_size_mbit: 30.0,
        cache_capacity_mbit: 30.0,
        max_blocks: 1,
    }
}
