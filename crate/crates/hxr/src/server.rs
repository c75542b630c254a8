//! HTTP/1.1 front end for any [`ReservoirService`].

use std::io::Read;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use hxr_core::service::ReservoirService;
use tiny_http::{Header, Request, Response};

use crate::error::{Error, Result};
use crate::protocol::{handle, Reply, CORRELATION_HEADER, MAX_BODY_BYTES, PROTOCOL_HEADER};

const POLL: Duration = Duration::from_millis(25);

/// A running server. [`ServerHandle::shutdown`] stops accepting new
/// connections and waits for queued and in-flight requests to finish.
#[derive(Debug)]
pub struct ServerHandle {
    addr: SocketAddr,
    stopping: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stopper(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.stopping)
    }

    pub fn shutdown(mut self) {
        self.stopping.store(true, Ordering::SeqCst);
        self.join();
    }

    /// Blocks until the stop flag is raised and the workers drain.
    pub fn wait(mut self) {
        self.join();
    }

    fn join(&mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stopping.store(true, Ordering::SeqCst);
        self.join();
    }
}

fn header<'a>(req: &'a Request, name: &'static str) -> Option<&'a str> {
    req.headers()
        .iter()
        .find(|h| h.field.equiv(name))
        .map(|h| h.value.as_str())
}

fn respond<S: ReservoirService + ?Sized>(service: &S, mut req: Request) {
    let protocol = header(&req, PROTOCOL_HEADER).map(str::to_owned);
    let correlation = header(&req, CORRELATION_HEADER).map(str::to_owned);
    let mut body = Vec::new();
    let read = req.as_reader().take(MAX_BODY_BYTES as u64 + 1).read_to_end(&mut body);
    let method = req.method().as_str().to_owned();
    let path = req.url().split('?').next().unwrap_or("").to_owned();
    let reply = match read {
        Ok(_) => handle(service, &method, &path, protocol.as_deref(), &body),
        Err(e) => Reply {
            status: 400,
            body: format!(r#"{{"error":{{"kind":"argument","message":"unreadable body: {e}"}}}}"#).into_bytes(),
        },
    };
    let mut response = Response::from_data(reply.body)
        .with_status_code(reply.status)
        .with_header(Header::from_bytes("Content-Type", "application/json").expect("static header"));
    if let Some(id) = correlation {
        if let Ok(h) = Header::from_bytes(CORRELATION_HEADER, id.as_bytes()) {
            response = response.with_header(h);
        }
    }
    // the peer may already be gone; nothing to report to
    let _ = req.respond(response);
}

/// Binds `addr` (port 0 picks a free port) and serves with `workers`
/// threads.
pub fn serve<S: ReservoirService + 'static>(service: Arc<S>, addr: &str, workers: usize) -> Result<ServerHandle> {
    let server = tiny_http::Server::http(addr).map_err(|e| Error::Transport(format!("cannot bind {addr}: {e}")))?;
    let bound = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| Error::Transport(format!("{addr} is not an IP listener")))?;
    let server = Arc::new(server);
    let stopping = Arc::new(AtomicBool::new(false));
    let workers = (0..workers.max(1))
        .map(|_| {
            let server = Arc::clone(&server);
            let service = Arc::clone(&service);
            let stopping = Arc::clone(&stopping);
            std::thread::spawn(move || loop {
                match server.recv_timeout(POLL) {
                    Ok(Some(req)) => respond(service.as_ref(), req),
                    Ok(None) if stopping.load(Ordering::SeqCst) => break,
                    Ok(None) => {}
                    Err(_) => break,
                }
            })
        })
        .collect();
    Ok(ServerHandle {
        addr: bound,
        stopping,
        workers,
    })
}
