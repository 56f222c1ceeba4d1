use approx::assert_relative_eq;
use ndarray::array;

use super::*;
use crate::model;
use crate::testutil::tiny_scenario;

fn coarse_qubo() -> QuboOptions {
    QuboOptions {
        phi_resolution_mbps: 0.25,
        coeff_grid_mbps: 1.0 / 16.0,
        ..QuboOptions::default()
    }
}

fn assert_monotone(trace: &SolveTrace) {
    for pair in trace.rows.windows(2) {
        assert!(pair[1].ub_mbps <= pair[0].ub_mbps + 1e-12);
        assert!(pair[1].lb_mbps >= pair[0].lb_mbps - 1e-12);
        assert!(pair[1].cuts_total >= pair[0].cuts_total);
    }
    for row in &trace.rows {
        assert_eq!(row.gap, gap(row.ub_mbps, row.lb_mbps).0);
        assert!(row.lb_mbps >= row.lb_raw_mbps);
    }
}

#[test]
fn gap_follows_the_relative_definition() {
    assert_eq!(gap(-10.0, -12.0), (0.2, false));
    assert_eq!(gap(-5.0, -5.0), (0.0, false));
    let (g, flag) = gap(-5.0, -5.0000001);
    assert!(!flag);
    assert_relative_eq!(g, 2e-8, max_relative = 1e-6);
    assert_eq!(gap(0.0, -3.0), (3.0, true));
}

#[test]
fn seed_mixing_separates_iterations_and_resamples() {
    let a = mix_seed(9, 1, false);
    let b = mix_seed(9, 2, false);
    let c = mix_seed(9, 1, true);
    assert_ne!(a, b);
    assert_ne!(a, c);
    assert_eq!(a, mix_seed(9, 1, false));
}

#[test]
fn initial_candidates_are_distinct_feasible_and_reproducible() {
    let sc = tiny_scenario(4, 2, 3, 3);
    let first = initial_candidates(&sc, 5, 11, None).unwrap();
    // head + popularity-spread starter + up to rho-1 perturbations
    assert!(!first.is_empty() && first.len() <= 6);
    let mut keys = HashSet::new();
    for (x, z) in &first {
        assert!(model::binary_feasible(&sc, x, z));
        assert!(keys.insert(xz_key(x, z)));
    }
    let again = initial_candidates(&sc, 5, 11, None).unwrap();
    assert_eq!(first, again);
    assert_ne!(first, initial_candidates(&sc, 5, 12, None).unwrap());
}

#[test]
fn overloaded_instance_is_rejected_up_front() {
    let sc = tiny_scenario(3, 1, 2, 2);
    match initial_candidates(&sc, 5, 0, None) {
        Err(GbdError::Infeasible(_)) => {}
        other => panic!("expected infeasible, got {other:?}"),
    }
}

#[test]
fn degenerate_options_are_rejected() {
    let sc = tiny_scenario(1, 1, 1, 1);
    let mut opts = GbdOptions { sampler: SamplerChoice::Exact, ..GbdOptions::default() };
    opts.rho = 0;
    assert!(matches!(run(&sc, &opts), Err(GbdError::InvalidOptions(_))));
    opts.rho = 1;
    opts.epsilon = 0.0;
    assert!(matches!(run(&sc, &opts), Err(GbdError::InvalidOptions(_))));
    opts.epsilon = 1e-3;
    opts.max_iter = 0;
    assert!(matches!(run(&sc, &opts), Err(GbdError::InvalidOptions(_))));
}

#[test]
fn single_link_converges_in_one_iteration_with_the_exact_master() {
    let sc = tiny_scenario(1, 1, 1, 1);
    let opts = GbdOptions {
        sampler: SamplerChoice::Exact,
        epsilon: 1e-6,
        seed: 3,
        ..GbdOptions::default()
    };
    let trace = run(&sc, &opts).unwrap();
    assert_eq!(trace.status, SolveStatus::Converged);
    assert_eq!(trace.rows.len(), 1);
    assert!(trace.gap <= 1e-6);
    assert_eq!(trace.vars.x[[0, 0]], 1);
    assert_eq!(trace.vars.z[[0, 0]], 1);
    // budget is slack for one user, so the box clips at its top
    assert_relative_eq!(trace.vars.p[[0, 0]], sc.user_power_max_w(), max_relative = 1e-9);
    assert_relative_eq!(trace.q_total_mbps, -trace.ub_mbps, max_relative = 1e-9);
    assert_eq!(trace.rows[0].lb_raw_mbps, trace.rows[0].lb_mbps);
    assert_monotone(&trace);
}

#[test]
fn timings_stay_zero_unless_recorded() {
    let sc = tiny_scenario(1, 1, 1, 1);
    let opts = GbdOptions {
        sampler: SamplerChoice::Exact,
        ..GbdOptions::default()
    };
    let trace = run(&sc, &opts).unwrap();
    assert!(trace.rows.iter().all(|r| r.sub_ms == 0.0 && r.master_ms == 0.0));
}

#[test]
fn qubo_brute_master_reaches_the_exact_incumbent() {
    let sc = tiny_scenario(1, 1, 1, 1);
    let exact = run(
        &sc,
        &GbdOptions { sampler: SamplerChoice::Exact, seed: 5, ..GbdOptions::default() },
    )
    .unwrap();
    let opts = GbdOptions {
        sampler: SamplerChoice::QuboBrute,
        qubo: coarse_qubo(),
        epsilon: 1e-3,
        max_iter: 30,
        seed: 5,
        ..GbdOptions::default()
    };
    let trace = run(&sc, &opts).unwrap();
    // the incumbent comes from exact subproblem solves either way; only
    // the lower bound feels the phi quantization
    assert_relative_eq!(trace.ub_mbps, exact.ub_mbps, max_relative = 1e-12);
    assert_ne!(trace.status, SolveStatus::IterationCap);
    assert_monotone(&trace);
}

#[test]
fn annealed_master_runs_are_reproducible() {
    let sc = tiny_scenario(1, 1, 1, 1);
    let opts = GbdOptions {
        sampler: SamplerChoice::Sa { reads: 16, sweeps: 60 },
        qubo: coarse_qubo(),
        epsilon: 1e-3,
        max_iter: 5,
        seed: 21,
        ..GbdOptions::default()
    };
    let a = run(&sc, &opts).unwrap();
    let b = run(&sc, &opts).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.vars.x, b.vars.x);
    assert_eq!(a.vars.z, b.vars.z);
    assert_eq!(a.vars.p, b.vars.p);
    assert_monotone(&a);
}

#[test]
fn clamped_cache_placement_is_respected_throughout() {
    let sc = tiny_scenario(2, 1, 2, 2);
    let clamp = array![[0u8], [1u8]];
    let opts = GbdOptions {
        sampler: SamplerChoice::Exact,
        clamp_x: Some(clamp.clone()),
        max_iter: 20,
        ..GbdOptions::default()
    };
    let trace = run(&sc, &opts).unwrap();
    assert_eq!(trace.vars.x, clamp);
    for rec in &trace.cut_records {
        assert_eq!(rec.x, clamp);
    }
    assert_monotone(&trace);
}

#[test]
fn deterministic_master_stops_at_a_fixed_point() {
    let sc = tiny_scenario(1, 1, 2, 1);
    // quantization keeps the bound away from the incumbent, so the gap
    // cannot close; the brute master must notice the repeat and stop
    let opts = GbdOptions {
        sampler: SamplerChoice::QuboBrute,
        qubo: QuboOptions {
            phi_resolution_mbps: 0.5,
            coeff_grid_mbps: 1.0 / 16.0,
            ..QuboOptions::default()
        },
        epsilon: 1e-9,
        max_iter: 200,
        ..GbdOptions::default()
    };
    let trace = run(&sc, &opts).unwrap();
    assert_eq!(trace.status, SolveStatus::Stalled);
    assert!(trace.rows.len() < 200);
    assert_monotone(&trace);
}

#[test]
fn every_cut_is_tight_at_its_generator() {
    let sc = tiny_scenario(2, 2, 2, 2);
    let opts = GbdOptions {
        sampler: SamplerChoice::Exact,
        epsilon: 1e-6,
        max_iter: 40,
        seed: 2,
        ..GbdOptions::default()
    };
    let trace = run(&sc, &opts).unwrap();
    assert!(!trace.cut_records.is_empty());
    for rec in &trace.cut_records {
        let at_generator = rec.cut.eval_mbps(&sc, &rec.x, &rec.z);
        assert_relative_eq!(at_generator, rec.sub_opt_mbps, max_relative = 1e-9);
    }
}
