//! HTTP client for a remote sampler service speaking the POST /sample
//! protocol. Returned energies are never trusted: every sample is
//! re-evaluated locally and the set re-sorted before use.

use std::time::{Duration, Instant};

use serde::Deserialize;

use super::{Sample, SampleSet, SamplerError, SamplerMeta, INTEGRITY_TOLERANCE};
use crate::qubo::QuboProblem;

#[derive(Deserialize)]
struct WireSample {
    bits: Vec<u8>,
    energy: f64,
    #[serde(default)]
    count: Option<u32>,
}

#[derive(Deserialize)]
struct WireResponse {
    samples: Vec<WireSample>,
}

fn map_http_error(e: ureq::Error) -> SamplerError {
    match e {
        ureq::Error::StatusCode(code) => {
            SamplerError::Protocol(format!("server returned status {code}"))
        }
        other => SamplerError::Transport(other.to_string()),
    }
}

pub fn remote_sample(
    endpoint: &str,
    q: &QuboProblem,
    reads: usize,
    timeout: Duration,
) -> Result<SampleSet, SamplerError> {
    if reads == 0 {
        return Err(SamplerError::InvalidArgument("reads must be at least 1".into()));
    }
    let start = Instant::now();
    let config = ureq::Agent::config_builder().timeout_global(Some(timeout)).build();
    let agent = ureq::Agent::new_with_config(config);
    let body = q.to_wire_json(reads);
    let mut resp = agent
        .post(endpoint)
        .header("content-type", "application/json")
        .send(body.as_str())
        .map_err(map_http_error)?;
    let text = resp.body_mut().read_to_string().map_err(map_http_error)?;
    let wire: WireResponse = serde_json::from_str(&text)
        .map_err(|e| SamplerError::Protocol(format!("malformed response: {e}")))?;

    let mut evaluated = Vec::with_capacity(wire.samples.len());
    for (index, s) in wire.samples.into_iter().enumerate() {
        if s.bits.len() != q.k || s.bits.iter().any(|&b| b > 1) {
            return Err(SamplerError::Protocol(format!(
                "sample {index} has an invalid bit vector"
            )));
        }
        let local = q.energy(&s.bits);
        if (local - s.energy).abs() > INTEGRITY_TOLERANCE {
            return Err(SamplerError::Integrity { index, claimed: s.energy, local });
        }
        evaluated.push((s.bits, local, s.count.unwrap_or(1).max(1)));
    }
    evaluated.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let mut samples: Vec<Sample> = Vec::new();
    for (bits, energy, count) in evaluated {
        match samples.last_mut() {
            Some(last) if last.bits == bits => last.multiplicity += count,
            _ => samples.push(Sample { bits, energy, multiplicity: count }),
        }
    }
    Ok(SampleSet {
        samples,
        meta: SamplerMeta {
            reads,
            sweeps: 0,
            seed: 0,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        },
    })
}
