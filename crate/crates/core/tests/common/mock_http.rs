#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

/// Canned chat-completion server. Each request pops the next status from `statuses`
/// (200 once they run out; 222 answers 2xx with no choices) and holds the connection for `hold` before replying.
pub struct MockServer {
    pub url: String,
    pub requests: Arc<AtomicUsize>,
    pub max_in_flight: Arc<AtomicUsize>,
    pub arrivals: Arc<Mutex<Vec<Instant>>>,
    pub bodies: Arc<Mutex<Vec<String>>>,
    pub auth_headers: Arc<Mutex<Vec<Option<String>>>>,
}

struct Shared {
    statuses: Mutex<Vec<u16>>,
    hold: Duration,
    in_flight: AtomicUsize,
}

impl MockServer {
    pub fn start(statuses: Vec<u16>, hold: Duration) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let shared = Arc::new(Shared { statuses: Mutex::new(statuses.into_iter().rev().collect()), hold, in_flight: AtomicUsize::new(0) });
        let server = Self {
            url,
            requests: Arc::default(),
            max_in_flight: Arc::default(),
            arrivals: Arc::default(),
            bodies: Arc::default(),
            auth_headers: Arc::default(),
        };
        let (requests, max_in_flight, arrivals, bodies, auth) = (
            server.requests.clone(),
            server.max_in_flight.clone(),
            server.arrivals.clone(),
            server.bodies.clone(),
            server.auth_headers.clone(),
        );
        thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let shared = shared.clone();
                let (requests, max_in_flight, arrivals, bodies, auth) =
                    (requests.clone(), max_in_flight.clone(), arrivals.clone(), bodies.clone(), auth.clone());
                thread::spawn(move || {
                    let _ = serve(stream, &shared, &requests, &max_in_flight, &arrivals, &bodies, &auth);
                });
            }
        });
        server
    }
}

#[allow(clippy::too_many_arguments)]
fn serve(
    stream: TcpStream,
    shared: &Shared,
    requests: &AtomicUsize,
    max_in_flight: &AtomicUsize,
    arrivals: &Mutex<Vec<Instant>>,
    bodies: &Mutex<Vec<String>>,
    auth: &Mutex<Vec<Option<String>>>,
) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut out = stream;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        let mut length = 0usize;
        let mut authorization = None;
        loop {
            let mut h = String::new();
            reader.read_line(&mut h)?;
            let h = h.trim_end();
            if h.is_empty() {
                break;
            }
            let lower = h.to_ascii_lowercase();
            if let Some(v) = lower.strip_prefix("content-length:") {
                length = v.trim().parse().unwrap_or(0);
            }
            if lower.starts_with("authorization:") {
                authorization = Some(h["authorization:".len()..].trim().to_string());
            }
        }
        let mut body = vec![0; length];
        reader.read_exact(&mut body)?;
        arrivals.lock().unwrap().push(Instant::now());
        bodies.lock().unwrap().push(String::from_utf8_lossy(&body).into_owned());
        auth.lock().unwrap().push(authorization);
        requests.fetch_add(1, Ordering::SeqCst);

        let now = shared.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        max_in_flight.fetch_max(now, Ordering::SeqCst);
        thread::sleep(shared.hold);
        shared.in_flight.fetch_sub(1, Ordering::SeqCst);

        let status = shared.statuses.lock().unwrap().pop().unwrap_or(200);
        let (reason, payload) = match status {
            200 => ("OK", r#"{"choices":[{"message":{"role":"assistant","content":"mock reply"}}]}"#.to_string()),
            401 => ("Unauthorized", r#"{"error":"bad key"}"#.to_string()),
            222 => ("OK", r#"{"choices":[]}"#.to_string()),
            429 => ("Too Many Requests", r#"{"error":"slow down"}"#.to_string()),
            s => ("Error", format!(r#"{{"error":"status {s}"}}"#)),
        };
        write!(
            out,
            "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{payload}",
            payload.len()
        )?;
        out.flush()?;
    }
}
