//! The power subproblem against an independent projected-gradient
//! solver, plus stationarity residual checks on its dual certificate.

mod common;

use istn_core::gbd;
use istn_core::scenario::{Scenario, ScenarioConfig};
use istn_core::subproblem::solve_power;

fn fixture_scenario(seed: u64) -> Scenario {
    Scenario::generate(ScenarioConfig {
        num_users: 3,
        num_satellites: 1,
        num_tbs: 1,
        num_contents: 2,
        max_blocks: 2,
        rng_seed: seed,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn matches_projected_gradient_on_seeded_fixtures() {
    let mut checked = 0;
    for seed in 0..8 {
        let sc = fixture_scenario(seed);
        for (x, z) in gbd::initial_candidates(&sc, 3, seed, None).unwrap() {
            let sol = solve_power(&sc, &x, &z).unwrap();
            let oracle = common::projected_gradient_oracle(&sc, &x, &z).unwrap();
            let rel = (sol.weighted_bps - oracle).abs() / oracle.abs().max(1.0);
            assert!(
                rel < 1e-5,
                "seed {seed}: solver {} vs oracle {} (rel {rel:.3e})",
                sol.weighted_bps,
                oracle
            );
            checked += 1;
        }
    }
    assert!(checked >= 16, "only {checked} fixtures exercised");
}

#[test]
fn stationarity_residuals_vanish_on_served_links() {
    for seed in 0..8 {
        let sc = fixture_scenario(seed);
        for (x, z) in gbd::initial_candidates(&sc, 3, seed + 100, None).unwrap() {
            let sol = solve_power(&sc, &x, &z).unwrap();
            let res = sol.kkt_residuals(&sc, &x, &z);
            for r in res.iter() {
                assert!(r.abs() < 1e-8, "residual {r:.3e}");
            }
        }
    }
}

#[test]
fn tight_budget_station_still_matches_the_oracle() {
    // all blocks on one TBS so its power budget binds
    let sc = Scenario::generate(ScenarioConfig {
        num_users: 4,
        num_satellites: 0,
        num_tbs: 1,
        num_contents: 2,
        max_blocks: 4,
        tbs_power_max_dbm: 40.0,
        rng_seed: 42,
        ..Default::default()
    })
    .unwrap();
    let x = ndarray::Array2::<u8>::ones((2, 1));
    let z = ndarray::Array2::<u8>::ones((4, 1));
    let sol = solve_power(&sc, &x, &z).unwrap();
    let budget = sc.bs_power_budget_w(0);
    let used: f64 = sol.p.iter().sum();
    assert!(used <= budget + 1e-9);
    let oracle = common::projected_gradient_oracle(&sc, &x, &z).unwrap();
    let rel = (sol.weighted_bps - oracle).abs() / oracle.abs();
    assert!(rel < 1e-5, "solver {} vs oracle {} (rel {rel:.3e})", sol.weighted_bps, oracle);
}

#[test]
fn multi_homed_users_match_the_oracle() {
    let sc = Scenario::generate(ScenarioConfig {
        num_users: 2,
        num_satellites: 1,
        num_tbs: 1,
        num_contents: 2,
        max_blocks: 2,
        rng_seed: 5,
        ..Default::default()
    })
    .unwrap();
    let x = ndarray::array![[1u8, 0], [0, 1]];
    let z = ndarray::Array2::<u8>::ones((2, 2));
    let sol = solve_power(&sc, &x, &z).unwrap();
    let oracle = common::projected_gradient_oracle(&sc, &x, &z).unwrap();
    let rel = (sol.weighted_bps - oracle).abs() / oracle.abs();
    assert!(rel < 1e-5, "solver {} vs oracle {} (rel {rel:.3e})", sol.weighted_bps, oracle);
}
