//! Round-trip and failure-path coverage for the remote sampler protocol
//! against the bundled loopback server.

use std::time::{Duration, Instant};

use ndarray::Array2;

use istn_core::qubo::{build_master_qubo, QuboOptions, QuboProblem};
use istn_core::sampler::remote::remote_sample;
use istn_core::sampler::server::{spawn_loopback, Fault};
use istn_core::sampler::{brute_force, SamplerError};
use istn_core::scenario::{Scenario, ScenarioConfig};
use istn_core::subproblem::BendersCut;

fn fixture(seed: u64, phi_range: (f64, f64)) -> QuboProblem {
    let sc = Scenario::generate(ScenarioConfig {
        num_users: 1,
        num_satellites: 0,
        num_tbs: 1,
        num_contents: 1,
        max_blocks: 1,
        bandwidth_per_block_hz: 2e4,
        rng_seed: seed,
        ..Default::default()
    })
    .unwrap();
    let grid = 1.0 / 1024.0;
    let cz = -0.25 - grid * (seed % 11) as f64;
    let cuts = vec![BendersCut {
        id: 0,
        constant_mbps: -0.5,
        coeff_z_mbps: Array2::from_elem((1, 1), cz),
        coeff_xz_mbps: Array2::from_elem((1, 1), -0.25),
    }];
    let opts = QuboOptions {
        phi_range_mbps: Some(phi_range),
        phi_resolution_mbps: 0.25,
        ..Default::default()
    };
    build_master_qubo(&sc, &cuts, None, &opts).unwrap()
}

#[test]
fn loopback_round_trip_reproduces_local_enumeration() {
    let server = spawn_loopback(0, Fault::None).unwrap();
    for seed in 0..10 {
        let q = fixture(seed, (-2.0, 0.0));
        let local = brute_force(&q).unwrap();
        let remote = remote_sample(&server.url(), &q, 4, Duration::from_secs(10)).unwrap();
        assert_eq!(remote.samples, local.samples, "fixture {seed} diverged");
    }
}

#[test]
fn corrupted_energies_fail_the_integrity_check() {
    let server = spawn_loopback(0, Fault::CorruptEnergies).unwrap();
    let q = fixture(1, (-2.0, 0.0));
    match remote_sample(&server.url(), &q, 4, Duration::from_secs(10)) {
        Err(SamplerError::Integrity { claimed, local, .. }) => {
            assert!((claimed - local).abs() > 0.4);
        }
        other => panic!("expected integrity error, got {other:?}"),
    }
}

#[test]
fn truncated_response_is_a_protocol_error() {
    let server = spawn_loopback(0, Fault::TruncateBody).unwrap();
    let q = fixture(2, (-2.0, 0.0));
    match remote_sample(&server.url(), &q, 4, Duration::from_secs(10)) {
        Err(SamplerError::Protocol(_)) => {}
        other => panic!("expected protocol error, got {other:?}"),
    }
}

#[test]
fn unreachable_endpoint_is_a_transport_error_within_the_timeout() {
    let server = spawn_loopback(0, Fault::None).unwrap();
    let url = server.url();
    server.shutdown();
    let q = fixture(3, (-2.0, 0.0));
    let timeout = Duration::from_secs(2);
    let start = Instant::now();
    match remote_sample(&url, &q, 4, timeout) {
        Err(SamplerError::Transport(_)) => {}
        other => panic!("expected transport error, got {other:?}"),
    }
    assert!(start.elapsed() < timeout + Duration::from_secs(3));
}

#[test]
fn wide_registers_are_refused_over_the_wire() {
    // a phi range needing ~24 bits pushes the register past the
    // enumeration limit; the server answers 400, the client calls it a
    // protocol failure
    let server = spawn_loopback(0, Fault::None).unwrap();
    let q = fixture(4, (-1_000_000.0, 0.0));
    assert!(q.k > 25);
    match remote_sample(&server.url(), &q, 4, Duration::from_secs(10)) {
        Err(SamplerError::Protocol(msg)) => assert!(msg.contains("400"), "message: {msg}"),
        other => panic!("expected protocol error, got {other:?}"),
    }
}

#[test]
fn health_endpoint_answers_ok() {
    let server = spawn_loopback(0, Fault::None).unwrap();
    let url = server.url().replace("/sample", "/health");
    let mut resp = ureq::get(&url).call().unwrap();
    assert_eq!(resp.status(), 200);
    assert!(resp.body_mut().read_to_string().unwrap().contains("ok"));
}
