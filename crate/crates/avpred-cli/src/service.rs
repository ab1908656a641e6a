//! JSON prediction service over HTTP.
//!
//! `POST /predict` with `{"sequences": ["ACDG...", ...]}` returns
//! per-sequence class probabilities, the predicted label, and the gate
//! weight. `GET /health` reports liveness. One immutable model serves all
//! worker threads.

use crate::config::RunConfig;
use avpred::augment::{AugmentConfig, PortableRng};
use avpred::error::{Error, Result};
use avpred::metrics::argmax;
use avpred::model::{forward, ModelConfig, ModelParams};
use avpred::seqio::PeptideSequence;
use avpred::train::{tta_predict, FeatureExtractor};
use std::sync::Arc;

/// Everything a request needs, loaded once and shared read-only.
pub struct LoadedModel {
    pub params: ModelParams,
    pub model: ModelConfig,
    pub extractor: FeatureExtractor,
    pub bounds: avpred::seqio::LengthBounds,
    /// Mutation-only test-time augmentation; 0 variants means plain
    /// single-pass prediction.
    pub tta: AugmentConfig,
    pub tta_seed: u64,
}

impl LoadedModel {
    pub fn new(
        params: ModelParams,
        model: ModelConfig,
        extractor: FeatureExtractor,
        cfg: &RunConfig,
        tta_variants: usize,
        tta_seed: u64,
    ) -> Result<Self> {
        if extractor.embed_dim() != model.embed_dim {
            return Err(Error::Mismatch(format!(
                "embedder dim {} but checkpoint expects {}",
                extractor.embed_dim(),
                model.embed_dim
            )));
        }
        Ok(Self {
            params,
            model,
            extractor,
            bounds: cfg.bounds,
            tta: AugmentConfig { tta_variants, ..cfg.augment.clone() },
            tta_seed,
        })
    }
}

#[derive(serde::Deserialize)]
struct PredictRequest {
    sequences: Vec<String>,
}

#[derive(serde::Serialize)]
struct PredictItem {
    index: usize,
    id: String,
    probs: Vec<f64>,
    label: usize,
    gate_lambda: f64,
}

#[derive(serde::Serialize)]
struct PredictResponse {
    results: Vec<PredictItem>,
}

enum Reply {
    Ok(String),
    BadRequest(String),
    Unprocessable(String),
    NotFound,
}

fn sequence_rejection(index: usize, raw: &str, err: &Error) -> Reply {
    let msg = match err {
        Error::Validation { ch, .. } => format!(
            "sequence {index} (`{raw}`) contains invalid residue '{ch}'"
        ),
        other => format!("sequence {index} rejected: {other}"),
    };
    Reply::Unprocessable(msg)
}

fn predict_body(model: &LoadedModel, body: &str) -> Reply {
    let request: PredictRequest = match serde_json::from_str(body) {
        Ok(r) => r,
        Err(e) => return Reply::BadRequest(format!("malformed request body: {e}")),
    };
    let mut results = Vec::with_capacity(request.sequences.len());
    for (index, raw) in request.sequences.iter().enumerate() {
        let cleaned = raw.trim().to_ascii_uppercase();
        // File-backed embedding exports key records by the sequence text.
        let seq = match PeptideSequence::new(cleaned.clone(), cleaned.clone()) {
            Ok(s) => s,
            Err(e) => return sequence_rejection(index, raw, &e),
        };
        if let Err(e) = model.bounds.check(seq.id(), seq.len()) {
            return sequence_rejection(index, raw, &e);
        }
        let outcome = (|| -> Result<(Vec<f64>, f64)> {
            let bundle = model.extractor.features_uncached(&seq)?;
            let out = forward(&model.params, &model.model, &model.extractor.input(&bundle)?)?;
            if model.tta.tta_variants == 0 {
                return Ok((out.probs, out.gate_lambda));
            }
            // Variant stream seeded from the sequence content so repeated
            // requests reproduce exactly.
            let mut h = model.tta_seed;
            for b in cleaned.bytes() {
                h = PortableRng::new(h ^ u64::from(b)).next_u64();
            }
            let mut rng = PortableRng::new(h);
            let probs =
                tta_predict(&model.params, &model.model, &model.extractor, &seq, &model.tta, &mut rng)?;
            Ok((probs, out.gate_lambda))
        })();
        match outcome {
            Ok((probs, gate_lambda)) => {
                let label = argmax(&probs);
                results.push(PredictItem { index, id: cleaned, probs, label, gate_lambda });
            }
            Err(e) => return sequence_rejection(index, raw, &e),
        }
    }
    match serde_json::to_string(&PredictResponse { results }) {
        Ok(json) => Reply::Ok(json),
        Err(e) => Reply::BadRequest(format!("response serialization failed: {e}")),
    }
}

fn handle(model: &LoadedModel, method: &str, url: &str, body: &str) -> Reply {
    match (method, url) {
        ("GET", "/health") => Reply::Ok("{\"status\":\"ok\"}".to_string()),
        ("POST", "/predict") => predict_body(model, body),
        _ => Reply::NotFound,
    }
}

/// A running service bound to an address; dropping the handle stops the
/// listener once in-flight requests complete.
pub struct ServiceHandle {
    server: Arc<tiny_http::Server>,
    pub addr: std::net::SocketAddr,
}

impl ServiceHandle {
    pub fn port(&self) -> u16 {
        self.addr.port()
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        self.server.unblock();
    }
}

/// Start the service with `workers` threads; `port` 0 picks an ephemeral
/// port. Returns once the socket is bound.
pub fn start_service(model: Arc<LoadedModel>, port: u16, workers: usize) -> Result<ServiceHandle> {
    let server = tiny_http::Server::http(("127.0.0.1", port))
        .map_err(|e| Error::Io(std::io::Error::other(format!("bind failed: {e}"))))?;
    let server = Arc::new(server);
    let addr = match server.server_addr() {
        tiny_http::ListenAddr::IP(a) => a,
        _ => return Err(Error::Io(std::io::Error::other("unexpected listener type"))),
    };
    for _ in 0..workers.max(1) {
        let server = server.clone();
        let model = model.clone();
        std::thread::spawn(move || loop {
            let mut request = match server.recv() {
                Ok(r) => r,
                Err(_) => break, // listener closed
            };
            let mut body = String::new();
            let _ = request.as_reader().read_to_string(&mut body);
            let method = request.method().as_str().to_string();
            let url = request.url().to_string();
            let reply = handle(&model, &method, &url, &body);
            let (status, payload) = match reply {
                Reply::Ok(json) => (200, json),
                Reply::BadRequest(msg) => (400, error_json(&msg)),
                Reply::Unprocessable(msg) => (422, error_json(&msg)),
                Reply::NotFound => (404, error_json("no such endpoint")),
            };
            let header = tiny_http::Header::from_bytes(
                &b"Content-Type"[..],
                &b"application/json"[..],
            )
            .expect("static header");
            let response =
                tiny_http::Response::from_string(payload).with_status_code(status).with_header(header);
            let _ = request.respond(response);
        });
    }
    Ok(ServiceHandle { server, addr })
}

fn error_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

/// Block forever serving requests (CLI entry point).
pub fn serve_forever(model: Arc<LoadedModel>, port: u16, workers: usize) -> Result<()> {
    let handle = start_service(model, port, workers)?;
    eprintln!("serving on http://{}", handle.addr);
    loop {
        std::thread::sleep(std::time::Duration::from_secs(3600));
    }
}
