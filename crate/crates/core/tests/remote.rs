//! Remote client against an in-process stub of the v1 prediction service.

mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use nlixy_core::effects::estimate_effect;
use nlixy_core::intervention::{build_intervention_set, standard_schemas, Pairing};
use nlixy_core::prediction::{
    CacheProvider, CachedProvider, LabelMapping, NliInput, PredictionCache, PredictionError, PredictionProvider,
};
use nlixy_core::remote::{RemoteConfig, RemoteProvider};
use proptest::prelude::*;
use serde_json::{json, Value};

const LABELS: [&str; 3] = ["contradiction", "entailment", "neutral"];

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Normal,
    /// Rows sum to 0.8.
    BadSum,
    /// The first `n` predict requests answer 503.
    FailFirst(usize),
    /// Rows have two entries instead of three.
    ShortRows,
    /// One row too few.
    MissingRow,
}

/// Deterministic distribution for a text pair, shared by the stub and the
/// expectations.
fn stub_probs(premise: &str, hypothesis: &str) -> Vec<f64> {
    let h = premise
        .bytes()
        .chain(hypothesis.bytes())
        .fold(7u64, |acc, b| acc.wrapping_mul(31).wrapping_add(b as u64));
    let w = [1 + h % 5, 1 + (h / 5) % 5, 1 + (h / 25) % 5].map(|x| x as f64);
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

struct Stub {
    server: Arc<tiny_http::Server>,
    address: String,
    predict_calls: Arc<AtomicUsize>,
    batch_sizes: Arc<Mutex<Vec<usize>>>,
    worker: Option<thread::JoinHandle<()>>,
}

impl Stub {
    fn start(model_id: &str, mode: Mode) -> Stub {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let address = server.server_addr().to_ip().unwrap().to_string();
        let predict_calls = Arc::new(AtomicUsize::new(0));
        let batch_sizes = Arc::new(Mutex::new(Vec::new()));
        let (srv, calls, sizes) = (server.clone(), predict_calls.clone(), batch_sizes.clone());
        let model_id = model_id.to_string();
        let worker = thread::spawn(move || {
            for mut req in srv.incoming_requests() {
                let (status, body) = match req.url() {
                    "/health" => (200, json!({"status": "ok", "model_id": model_id, "labels": LABELS})),
                    "/predict" => {
                        let call = calls.fetch_add(1, Ordering::SeqCst);
                        let mut text = String::new();
                        std::io::Read::read_to_string(req.as_reader(), &mut text).unwrap();
                        let v: Value = serde_json::from_str(&text).unwrap();
                        let pairs = v["pairs"].as_array().unwrap();
                        sizes.lock().unwrap().push(pairs.len());
                        let mut rows: Vec<Vec<f64>> = pairs
                            .iter()
                            .map(|p| stub_probs(p["premise"].as_str().unwrap(), p["hypothesis"].as_str().unwrap()))
                            .collect();
                        match mode {
                            Mode::FailFirst(n) if call < n => (503, json!({"error": "loading"})),
                            Mode::BadSum => {
                                for r in &mut rows {
                                    r.iter_mut().for_each(|x| *x *= 0.8);
                                }
                                (200, json!({ "probs": rows }))
                            }
                            Mode::ShortRows => {
                                rows.iter_mut().for_each(|r| r.truncate(2));
                                (200, json!({ "probs": rows }))
                            }
                            Mode::MissingRow => {
                                rows.pop();
                                (200, json!({ "probs": rows }))
                            }
                            _ => (200, json!({ "probs": rows })),
                        }
                    }
                    _ => (404, json!({"error": "not found"})),
                };
                let header = "Content-Type: application/json".parse::<tiny_http::Header>().unwrap();
                let resp = tiny_http::Response::from_string(body.to_string())
                    .with_status_code(status)
                    .with_header(header);
                let _ = req.respond(resp);
            }
        });
        Stub {
            server,
            address,
            predict_calls,
            batch_sizes,
            worker: Some(worker),
        }
    }

    fn config(&self, model_id: &str, batch_size: usize) -> RemoteConfig {
        let mut c = RemoteConfig::new(self.address.clone(), model_id);
        c.batch_size = batch_size;
        c.backoff_base = Duration::from_millis(5);
        c.timeout = Duration::from_secs(10);
        c
    }

    fn calls(&self) -> usize {
        self.predict_calls.load(Ordering::SeqCst)
    }
}

impl Drop for Stub {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

fn texts(n: usize) -> Vec<(String, String)> {
    (0..n)
        .map(|i| {
            (
                format!("premise {i} about a dog"),
                format!("hypothesis {i} about an animal"),
            )
        })
        .collect()
}

fn inputs(t: &[(String, String)]) -> Vec<NliInput<'_>> {
    t.iter()
        .map(|(p, h)| NliInput::Text {
            premise: p,
            hypothesis: h,
        })
        .collect()
}

#[test]
fn health_labels_pass_through_in_server_order() {
    let stub = Stub::start("roberta-large-mnli", Mode::Normal);
    let p = RemoteProvider::connect(stub.config("roberta-large-mnli", 32)).unwrap();
    assert_eq!(p.label_space(), LABELS);
    assert_eq!(p.model_id(), "roberta-large-mnli");
}

#[test]
fn hundred_inputs_take_four_requests_of_thirty_two() {
    let stub = Stub::start("m", Mode::Normal);
    let p = RemoteProvider::connect(stub.config("m", 32)).unwrap();
    assert_eq!(p.request_count(100), 4);
    let t = texts(100);
    let out = p.predict_batch(&inputs(&t)).unwrap();
    assert_eq!(out.len(), 100);
    assert_eq!(stub.calls(), 4);
    let mut sizes = stub.batch_sizes.lock().unwrap().clone();
    sizes.sort();
    assert_eq!(sizes, [4, 32, 32, 32]);
}

#[test]
fn empty_input_sends_nothing() {
    let stub = Stub::start("m", Mode::Normal);
    let p = RemoteProvider::connect(stub.config("m", 8)).unwrap();
    assert!(p.predict_batch(&[]).unwrap().is_empty());
    assert_eq!(stub.calls(), 0);
}

#[test]
fn rows_not_summing_to_one_are_a_protocol_error() {
    let stub = Stub::start("m", Mode::BadSum);
    let p = RemoteProvider::connect(stub.config("m", 32)).unwrap();
    let t = texts(3);
    assert!(matches!(
        p.predict_batch(&inputs(&t)),
        Err(PredictionError::Protocol(_))
    ));
}

#[test]
fn short_rows_are_a_label_space_mismatch() {
    let stub = Stub::start("m", Mode::ShortRows);
    let p = RemoteProvider::connect(stub.config("m", 32)).unwrap();
    let t = texts(3);
    assert!(matches!(
        p.predict_batch(&inputs(&t)),
        Err(PredictionError::LabelSpaceMismatch { .. })
    ));
}

#[test]
fn missing_rows_are_a_protocol_error() {
    let stub = Stub::start("m", Mode::MissingRow);
    let p = RemoteProvider::connect(stub.config("m", 32)).unwrap();
    let t = texts(3);
    assert!(matches!(
        p.predict_batch(&inputs(&t)),
        Err(PredictionError::Protocol(_))
    ));
}

#[test]
fn server_errors_are_retried() {
    let stub = Stub::start("m", Mode::FailFirst(2));
    let p = RemoteProvider::connect(stub.config("m", 32)).unwrap();
    let t = texts(5);
    let out = p.predict_batch(&inputs(&t)).unwrap();
    assert_eq!(out.len(), 5);
    assert_eq!(stub.calls(), 3);
}

#[test]
fn persistent_server_errors_become_transport_errors() {
    let stub = Stub::start("m", Mode::FailFirst(usize::MAX));
    let p = RemoteProvider::connect(stub.config("m", 32)).unwrap();
    let t = texts(5);
    assert!(matches!(
        p.predict_batch(&inputs(&t)),
        Err(PredictionError::Transport(_))
    ));
    assert_eq!(stub.calls(), 3);
}

#[test]
fn model_id_mismatch_is_rejected() {
    let stub = Stub::start("bart-large-mnli", Mode::Normal);
    assert!(matches!(
        RemoteProvider::connect(stub.config("roberta-large-mnli", 32)),
        Err(PredictionError::Protocol(_))
    ));
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let addr = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap()
    };
    let mut c = RemoteConfig::new(addr.to_string(), "m");
    c.backoff_base = Duration::from_millis(1);
    assert!(matches!(RemoteProvider::connect(c), Err(PredictionError::Transport(_))));
}

#[test]
fn cached_remote_and_cache_file_give_identical_estimates() {
    let stub = Stub::start("m", Mode::Normal);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    let d = common::balanced_dataset(4, 6);
    let sets: Vec<_> = standard_schemas()
        .iter()
        .map(|s| build_intervention_set(&d, s, 24, 5, Pairing::AllCandidates).unwrap())
        .collect();

    let remote = RemoteProvider::connect(stub.config("m", 7)).unwrap();
    let mapping = LabelMapping::standard(remote.label_space()).unwrap();
    let cache = Arc::new(PredictionCache::open(&path).unwrap());
    let cached = CachedProvider::new(remote, cache, 7);
    let live: Vec<f64> = sets
        .iter()
        .map(|s| estimate_effect(s, &cached, &mapping).unwrap().value)
        .collect();
    let calls_after_first = stub.calls();
    let again: Vec<f64> = sets
        .iter()
        .map(|s| estimate_effect(s, &cached, &mapping).unwrap().value)
        .collect();
    assert_eq!(live, again);
    assert_eq!(
        stub.calls(),
        calls_after_first,
        "second pass must be served from the cache"
    );
    drop(cached);

    let offline = CacheProvider::new(Arc::new(PredictionCache::open_read_only(&path).unwrap()), "m").unwrap();
    assert_eq!(offline.label_space(), LABELS);
    let replayed: Vec<f64> = sets
        .iter()
        .map(|s| estimate_effect(s, &offline, &mapping).unwrap().value)
        .collect();
    assert_eq!(live, replayed);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn rows_come_back_in_request_order(n in 0usize..120, batch in 1usize..40, in_flight in 1usize..6) {
        let stub = Stub::start("m", Mode::Normal);
        let mut config = stub.config("m", batch);
        config.max_in_flight = in_flight;
        let p = RemoteProvider::connect(config).unwrap();
        let t = texts(n);
        let out = p.predict_batch(&inputs(&t)).unwrap();
        prop_assert_eq!(out.len(), n);
        for ((premise, hypothesis), d) in t.iter().zip(&out) {
            let want = stub_probs(premise, hypothesis);
            prop_assert_eq!(d.probs(), want.as_slice());
        }
        prop_assert_eq!(stub.calls(), n.div_ceil(batch));
    }
}
