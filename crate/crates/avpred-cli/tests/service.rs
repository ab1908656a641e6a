//! HTTP service behavior against an in-process server.

use avpred::descriptors::DescriptorConfig;
use avpred::embed::FallbackProvider;
use avpred::model::{ModelConfig, ModelParams};
use avpred::train::FeatureExtractor;
use avpred_cli::config::RunConfig;
use avpred_cli::service::{start_service, LoadedModel, ServiceHandle};
use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Arc;

fn tiny_loaded(tta: usize) -> LoadedModel {
    let mut cfg = RunConfig::default();
    cfg.bounds.min = 5;
    cfg.bounds.max = 20;
    cfg.descriptor = DescriptorConfig {
        cksaagp_max_gap: 1,
        distpair_max_dist: 1,
        paac_lambda: 2,
        paac_weight: 0.05,
        qso_nlag: 2,
        qso_weight: 0.1,
        binary_max_len: 20,
    };
    let extractor = FeatureExtractor::new_uncached(
        Box::new(FallbackProvider { dim: 8, seed: 3 }),
        cfg.descriptor.clone(),
    );
    let model = ModelConfig {
        embed_dim: 8,
        descriptor_dim: extractor.descriptor_dim(),
        conv_kernel_sizes: vec![3, 5],
        conv_channels: 4,
        lstm_hidden: 4,
        gate_hidden: 4,
        mlp_hidden: vec![8],
        class_count: 2,
        dropout: 0.0,
        f_match_identity: false,
        per_dim_gate: false,
    };
    let params = ModelParams::init(&model, 1).unwrap();
    LoadedModel::new(params, model, extractor, &cfg, tta, 0).unwrap()
}

fn request(handle: &ServiceHandle, method: &str, path: &str, body: &str) -> (u16, String) {
    let mut stream = TcpStream::connect(handle.addr).unwrap();
    let payload = format!(
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(payload.as_bytes()).unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    let status: u16 = response
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .expect("status line");
    let body = response.split("\r\n\r\n").nth(1).unwrap_or("").to_string();
    (status, body)
}

#[test]
fn health_endpoint_reports_ok() {
    let handle = start_service(Arc::new(tiny_loaded(0)), 0, 2).unwrap();
    let (status, body) = request(&handle, "GET", "/health", "");
    assert_eq!(status, 200);
    assert_eq!(body, "{\"status\":\"ok\"}");
}

#[test]
fn empty_sequence_list_returns_empty_results() {
    let handle = start_service(Arc::new(tiny_loaded(0)), 0, 2).unwrap();
    let (status, body) = request(&handle, "POST", "/predict", "{\"sequences\":[]}");
    assert_eq!(status, 200);
    let doc: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(doc["results"], serde_json::json!([]));
}

#[test]
fn invalid_residue_is_422_naming_the_character() {
    let handle = start_service(Arc::new(tiny_loaded(0)), 0, 2).unwrap();
    let (status, body) = request(&handle, "POST", "/predict", "{\"sequences\":[\"ACXGACDEF\"]}");
    assert_eq!(status, 422);
    assert!(body.contains("'X'"), "{body}");
}

#[test]
fn malformed_body_is_400() {
    let handle = start_service(Arc::new(tiny_loaded(0)), 0, 2).unwrap();
    let (status, body) = request(&handle, "POST", "/predict", "{\"sequences\": oops");
    assert_eq!(status, 400);
    assert!(body.contains("error"));
}

#[test]
fn unknown_endpoint_is_404() {
    let handle = start_service(Arc::new(tiny_loaded(0)), 0, 2).unwrap();
    let (status, _) = request(&handle, "GET", "/nope", "");
    assert_eq!(status, 404);
}

#[test]
fn repeated_requests_are_deterministic_without_tta() {
    let handle = start_service(Arc::new(tiny_loaded(0)), 0, 2).unwrap();
    let body = "{\"sequences\":[\"ACDEFGHIKL\",\"KKKKKLLLLW\"]}";
    let (s1, b1) = request(&handle, "POST", "/predict", body);
    let (s2, b2) = request(&handle, "POST", "/predict", body);
    assert_eq!(s1, 200);
    assert_eq!(s2, 200);
    assert_eq!(b1, b2);
    let doc: serde_json::Value = serde_json::from_str(&b1).unwrap();
    let results = doc["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    for (i, item) in results.iter().enumerate() {
        assert_eq!(item["index"], serde_json::json!(i));
        let probs: Vec<f64> =
            item["probs"].as_array().unwrap().iter().map(|p| p.as_f64().unwrap()).collect();
        assert_eq!(probs.len(), 2);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let lambda = item["gate_lambda"].as_f64().unwrap();
        assert!(lambda > 0.0 && lambda < 1.0);
    }
}

#[test]
fn tta_zero_variants_equals_plain_service() {
    let plain = start_service(Arc::new(tiny_loaded(0)), 0, 2).unwrap();
    let tta0 = start_service(Arc::new(tiny_loaded(0)), 0, 2).unwrap();
    let body = "{\"sequences\":[\"ACDEFGHIKL\"]}";
    let (_, b1) = request(&plain, "POST", "/predict", body);
    let (_, b2) = request(&tta0, "POST", "/predict", body);
    assert_eq!(b1, b2);
}

#[test]
fn concurrent_requests_are_served() {
    let handle = Arc::new(start_service(Arc::new(tiny_loaded(0)), 0, 4).unwrap());
    let mut joins = Vec::new();
    for i in 0..8 {
        let handle = handle.clone();
        joins.push(std::thread::spawn(move || {
            let body = "{\"sequences\":[\"ACDEFGHIKL\",\"GGGGGSSSSS\"]}".to_string();
            let (status, response) = request(&handle, "POST", "/predict", &body);
            assert_eq!(status, 200, "request {i}");
            response
        }));
    }
    let responses: Vec<String> = joins.into_iter().map(|j| j.join().unwrap()).collect();
    for r in &responses[1..] {
        assert_eq!(r, &responses[0]);
    }
}
