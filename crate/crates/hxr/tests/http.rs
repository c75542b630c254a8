use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use hxr::client::{fetch_info, ClientConfig, HttpReservoir};
use hxr::server::serve;
use hxr::Error;
use hxr_core::mock::{MockConfig, MockReservoir};
use hxr_core::service::{ReservoirOutput, ReservoirRequest, ReservoirService, ServerInfo, ServiceError};
use hxr_core::tensor::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mock() -> MockReservoir {
    MockReservoir::new(MockConfig::default()).unwrap()
}

fn fast_client() -> ClientConfig {
    ClientConfig {
        deadline_ms: 10_000,
        retries: 2,
        backoff_ms: 10,
    }
}

fn request(seed: u64) -> ReservoirRequest {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ReservoirRequest {
        prompt_text: "<|start_prompt|> peak compression ramp".into(),
        input_vectors: Matrix::uniform(13, 64, 0.5, &mut rng).to_rows(),
        return_last_k: 20,
    }
}

/// Wraps the mock with a delay and a count of initial 503 failures.
struct Scripted {
    inner: MockReservoir,
    delay: Duration,
    failures: AtomicUsize,
    calls: AtomicUsize,
}

impl Scripted {
    fn new(delay_ms: u64, failures: usize) -> Self {
        Self {
            inner: mock(),
            delay: Duration::from_millis(delay_ms),
            failures: AtomicUsize::new(failures),
            calls: AtomicUsize::new(0),
        }
    }
}

impl ReservoirService for Scripted {
    fn info(&self) -> Result<ServerInfo, ServiceError> {
        self.inner.info()
    }

    fn run_reservoir(&self, request: &ReservoirRequest) -> Result<ReservoirOutput, ServiceError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        thread::sleep(self.delay);
        if self
            .failures
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok()
        {
            return Err(ServiceError::Server {
                status: 503,
                message: "warming up".into(),
            });
        }
        self.inner.run_reservoir(request)
    }

    fn embed_terms(&self, terms: &[String]) -> Result<Vec<Vec<f64>>, ServiceError> {
        self.inner.embed_terms(terms)
    }
}

#[test]
fn loopback_results_equal_in_process_results() {
    let server = serve(Arc::new(mock()), "127.0.0.1:0", 2).unwrap();
    let client = HttpReservoir::new(&server.url(), fast_client());
    let local = mock();
    assert_eq!(client.info().unwrap(), local.info().unwrap());
    for seed in 0..3 {
        assert_eq!(
            client.run_reservoir(&request(seed)).unwrap(),
            local.run_reservoir(&request(seed)).unwrap()
        );
    }
    let terms: Vec<String> = ["pulse", "trailing edge"].map(String::from).to_vec();
    assert_eq!(client.embed_terms(&terms).unwrap(), local.embed_terms(&terms).unwrap());
    server.shutdown();
}

#[test]
fn slow_server_hits_the_deadline() {
    let server = serve(Arc::new(Scripted::new(1500, 0)), "127.0.0.1:0", 1).unwrap();
    let client = HttpReservoir::new(
        &server.url(),
        ClientConfig {
            deadline_ms: 200,
            retries: 0,
            backoff_ms: 10,
        },
    );
    let start = Instant::now();
    let err = client.run_reservoir(&request(0)).unwrap_err();
    assert!(matches!(err, ServiceError::Deadline { millis: 200 }), "{err:?}");
    assert!(start.elapsed() < Duration::from_millis(1200));
}

#[test]
fn closed_port_exhausts_retries() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let client = HttpReservoir::new(&format!("http://127.0.0.1:{port}"), fast_client());
    match client.info().unwrap_err() {
        ServiceError::Transport { retries, .. } => assert_eq!(retries, 2),
        other => panic!("expected a transport error, got {other:?}"),
    }
    let err: Error = client.info().unwrap_err().into();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn server_errors_are_retried() {
    let service = Arc::new(Scripted::new(0, 2));
    let server = serve(Arc::clone(&service), "127.0.0.1:0", 1).unwrap();
    let client = HttpReservoir::new(&server.url(), fast_client());
    assert_eq!(
        client.run_reservoir(&request(1)).unwrap(),
        mock().run_reservoir(&request(1)).unwrap()
    );
    assert_eq!(service.calls.load(Ordering::SeqCst), 3);

    service.failures.store(5, Ordering::SeqCst);
    assert!(matches!(
        client.run_reservoir(&request(1)),
        Err(ServiceError::Transport { retries: 2, .. })
    ));
}

#[test]
fn version_mismatch_is_a_compatibility_error() {
    let cfg = MockConfig {
        protocol_version: 99,
        ..MockConfig::default()
    };
    let server = serve(Arc::new(MockReservoir::new(cfg).unwrap()), "127.0.0.1:0", 1).unwrap();
    let client = HttpReservoir::new(&server.url(), fast_client());
    let err = fetch_info(&client).unwrap_err();
    assert!(
        matches!(
            err,
            Error::Core(hxr_core::Error::Service(ServiceError::Compatibility { server: 99, .. }))
        ),
        "{err:?}"
    );
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("99"), "{err}");
}

fn canned_server(body: &'static str) -> (String, thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let (mut stream, _) = listener.accept().unwrap();
        let mut buf = [0u8; 4096];
        let _ = stream.read(&mut buf);
        let reply = format!(
            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        );
        stream.write_all(reply.as_bytes()).unwrap();
    });
    (url, handle)
}

#[test]
fn malformed_response_is_a_parse_error() {
    let (url, server) = canned_server("{\"model_id\": \"x\", \"hidden_dim\": ");
    let client = HttpReservoir::new(&url, fast_client());
    assert!(matches!(client.info(), Err(ServiceError::Parse(_))));
    server.join().unwrap();

    let (url, server) = canned_server("{\"states\": [[0.0]], \"entropies\": []}");
    let client = HttpReservoir::new(&url, fast_client());
    assert!(matches!(client.run_reservoir(&request(0)), Err(ServiceError::Parse(_))));
    server.join().unwrap();
}

#[test]
fn concurrent_clients_get_independent_answers() {
    let server = serve(Arc::new(mock()), "127.0.0.1:0", 4).unwrap();
    let url = server.url();
    let local = mock();
    thread::scope(|s| {
        let handles: Vec<_> = (0..8)
            .map(|seed| {
                let url = url.clone();
                s.spawn(move || {
                    HttpReservoir::new(&url, fast_client())
                        .run_reservoir(&request(seed))
                        .unwrap()
                })
            })
            .collect();
        for (seed, h) in handles.into_iter().enumerate() {
            assert_eq!(h.join().unwrap(), local.run_reservoir(&request(seed as u64)).unwrap());
        }
    });
}

#[test]
fn shutdown_finishes_in_flight_requests() {
    let server = serve(Arc::new(Scripted::new(400, 0)), "127.0.0.1:0", 2).unwrap();
    let url = server.url();
    let in_flight = thread::spawn(move || HttpReservoir::new(&url, fast_client()).run_reservoir(&request(2)));
    thread::sleep(Duration::from_millis(100));
    server.shutdown();
    assert_eq!(
        in_flight.join().unwrap().unwrap(),
        mock().run_reservoir(&request(2)).unwrap()
    );
}
