//! Loopback reference sampler: answers POST /sample with exact
//! enumeration. Ships for integration tests and the serve-loopback
//! command; fault injection exists so clients can prove their error paths.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use tiny_http::{Header, Method, Response, Server};

use super::{enumerate_states, SamplerError, BRUTE_FORCE_LIMIT};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Fault {
    #[default]
    None,
    /// Shift every reported energy so clients must flag integrity loss.
    CorruptEnergies,
    /// Cut the JSON body short so clients must flag a protocol error.
    TruncateBody,
}

#[derive(Deserialize)]
struct WireRequest {
    k: usize,
    offset: f64,
    terms: Vec<(usize, usize, f64)>,
    #[serde(default)]
    #[allow(dead_code)]
    reads: Option<usize>,
}

#[derive(Serialize)]
struct WireSample {
    bits: Vec<u8>,
    energy: f64,
    count: u32,
}

#[derive(Serialize)]
struct WireResponse {
    samples: Vec<WireSample>,
}

pub struct LoopbackServer {
    server: Arc<Server>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
    port: u16,
}

impl LoopbackServer {
    pub fn port(&self) -> u16 {
        self.port
    }

    /// Endpoint URL for `remote_sample`.
    pub fn url(&self) -> String {
        format!("http://127.0.0.1:{}/sample", self.port)
    }

    pub fn shutdown(self) {}
}

impl Drop for LoopbackServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.server.unblock();
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn json_response(body: String, status: u32) -> Response<std::io::Cursor<Vec<u8>>> {
    let header = Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
        .expect("static header");
    Response::from_string(body).with_status_code(status).with_header(header)
}

fn handle(req: &mut tiny_http::Request, fault: Fault) -> Response<std::io::Cursor<Vec<u8>>> {
    if *req.method() == Method::Get && req.url() == "/health" {
        return json_response("{\"status\":\"ok\"}".into(), 200);
    }
    if *req.method() != Method::Post || req.url() != "/sample" {
        return json_response("{\"error\":\"not found\"}".into(), 404);
    }
    let mut body = String::new();
    if req.as_reader().read_to_string(&mut body).is_err() {
        return json_response("{\"error\":\"unreadable body\"}".into(), 400);
    }
    let wire: WireRequest = match serde_json::from_str(&body) {
        Ok(w) => w,
        Err(e) => return json_response(format!("{{\"error\":\"bad request: {e}\"}}"), 400),
    };
    if wire.k > BRUTE_FORCE_LIMIT {
        return json_response(
            format!("{{\"error\":\"register too wide: {} bits\"}}", wire.k),
            400,
        );
    }
    if wire.terms.iter().any(|&(i, j, _)| i >= wire.k || j >= wire.k) {
        return json_response("{\"error\":\"term index out of range\"}".into(), 400);
    }
    let states = match enumerate_states(wire.k, wire.offset, &wire.terms) {
        Ok(s) => s,
        Err(e) => return json_response(format!("{{\"error\":\"{e}\"}}"), 400),
    };
    let corruption = match fault {
        Fault::CorruptEnergies => 0.5,
        _ => 0.0,
    };
    let samples = states
        .into_iter()
        .map(|(bits, energy)| WireSample { bits, energy: energy + corruption, count: 1 })
        .collect();
    let mut text = serde_json::to_string(&WireResponse { samples }).expect("response serializes");
    if fault == Fault::TruncateBody {
        text.truncate(text.len() / 2);
    }
    json_response(text, 200)
}

/// Bind the loopback sampler on 127.0.0.1; port 0 picks an ephemeral port.
/// The server runs on its own thread until the handle is dropped.
pub fn spawn_loopback(port: u16, fault: Fault) -> Result<LoopbackServer, SamplerError> {
    let server = Server::http(("127.0.0.1", port))
        .map_err(|e| SamplerError::Transport(format!("bind failed: {e}")))?;
    let server = Arc::new(server);
    let bound_port = server.server_addr().to_ip().map(|a| a.port()).unwrap_or(0);
    let stop = Arc::new(AtomicBool::new(false));
    let thread_server = Arc::clone(&server);
    let thread_stop = Arc::clone(&stop);
    let handle = std::thread::spawn(move || {
        while !thread_stop.load(Ordering::SeqCst) {
            let mut req = match thread_server.recv() {
                Ok(r) => r,
                Err(_) => break,
            };
            let resp = handle(&mut req, fault);
            let _ = req.respond(resp);
        }
    });
    Ok(LoopbackServer { server, stop, handle: Some(handle), port: bound_port })
}
