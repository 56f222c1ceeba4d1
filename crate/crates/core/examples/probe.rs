use istn_core::baselines::{evaluate_baseline, BaselineKind};
use istn_core::qubo::QuboOptions;
use istn_core::scenario::{Scenario, ScenarioConfig};
use istn_core::{gbd, GbdOptions, SamplerChoice};
use std::time::Instant;

fn main() {
    let t_all = Instant::now();
    let mut rows: Vec<(f64, f64, f64, f64, f64, f64)> = Vec::new();
    for seed in 0..20u64 {
        let sc =
            Scenario::generate(ScenarioConfig { rng_seed: 500 + seed, ..Default::default() })
                .unwrap();
        let opts = GbdOptions {
            rho: 5,
            epsilon: 5e-3,
            max_iter: 2,
            sampler: SamplerChoice::Sa { reads: 48, sweeps: 3000 },
            qubo: QuboOptions {
                phi_resolution_mbps: 1.0,
                coeff_grid_mbps: 1.0,
                xi_cut: Some(2.0),
                ..Default::default()
            },
            seed,
            ..Default::default()
        };
        let t0 = Instant::now();
        let proposed = match gbd::run(&sc, &opts) {
            Ok(t) => t,
            Err(e) => {
                println!("seed {seed} proposed: ERROR {e}");
                continue;
            }
        };
        let pop = match evaluate_baseline(&sc, BaselineKind::CooperativePopularity, seed, &opts)
        {
            Ok(o) => o,
            Err(e) => {
                println!("seed {seed} coop-pop: ERROR {e}");
                continue;
            }
        };
        let rnd = match evaluate_baseline(&sc, BaselineKind::CooperativeRandom, seed, &opts) {
            Ok(o) => o,
            Err(e) => {
                println!("seed {seed} coop-rnd: ERROR {e}");
                continue;
            }
        };
        let non = match evaluate_baseline(&sc, BaselineKind::NonCooperative, seed, &opts) {
            Ok(o) => o,
            Err(e) => {
                println!("seed {seed} non-coop: ERROR {e}");
                continue;
            }
        };
        println!(
            "seed {seed:2}: prop {:8.2} pop {:8.2} rnd {:8.2} non {:8.2} | cache pop {:7.2} rnd {:7.2} ({:.1}s)",
            proposed.q_total_mbps,
            pop.q_total_mbps,
            rnd.q_total_mbps,
            non.q_total_mbps,
            pop.q_cache_mbps,
            rnd.q_cache_mbps,
            t0.elapsed().as_secs_f64()
        );
        rows.push((
            proposed.q_total_mbps,
            pop.q_total_mbps,
            rnd.q_total_mbps,
            non.q_total_mbps,
            pop.q_cache_mbps,
            rnd.q_cache_mbps,
        ));
    }
    let med = |f: &dyn Fn(&(f64, f64, f64, f64, f64, f64)) -> f64| -> f64 {
        let mut v: Vec<f64> = rows.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n == 0 {
            return f64::NAN;
        }
        if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
    };
    println!(
        "medians ({} rows): prop {:.2} pop {:.2} rnd {:.2} non {:.2} | cache pop {:.2} rnd {:.2}",
        rows.len(),
        med(&|r| r.0),
        med(&|r| r.1),
        med(&|r| r.2),
        med(&|r| r.3),
        med(&|r| r.4),
        med(&|r| r.5)
    );
    println!("total {:.1}s", t_all.elapsed().as_secs_f64());
}
