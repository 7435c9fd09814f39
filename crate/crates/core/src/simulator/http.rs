//! Minimal HTTP facade over a [`SimPlatform`], for exercising the real
//! HTTP client end to end.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::Serialize;

use super::platform::SimPlatform;
use crate::collector::http::API_PREFIX;
use crate::collector::source::{PlatformSource, SourceError, SourceResult};
use crate::model::parse_timestamp;

#[derive(Default)]
struct Counters {
    requests: AtomicU64,
    write_calls: AtomicU64,
}

pub struct SimServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    counters: Arc<Counters>,
    handle: Option<JoinHandle<()>>,
}

impl SimServer {
    /// Binds an ephemeral localhost port and serves until dropped.
    pub fn start(platform: Arc<SimPlatform>) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let counters = Arc::new(Counters::default());
        let (stop2, counters2) = (stop.clone(), counters.clone());
        let handle = std::thread::spawn(move || {
            for conn in listener.incoming() {
                if stop2.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = conn else { continue };
                let (p, c) = (platform.clone(), counters2.clone());
                std::thread::spawn(move || {
                    if let Err(e) = handle_conn(stream, &p, &c) {
                        tracing::debug!(error = %e, "sim http connection");
                    }
                });
            }
        });
        Ok(SimServer { addr, stop, counters, handle: Some(handle) })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn request_count(&self) -> u64 {
        self.counters.requests.load(Ordering::SeqCst)
    }

    /// Requests with any method other than GET or HEAD.
    pub fn write_calls(&self) -> u64 {
        self.counters.write_calls.load(Ordering::SeqCst)
    }
}

impl Drop for SimServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn percent_decode(s: &str) -> String {
    fn hex(b: u8) -> Option<u8> {
        (b as char).to_digit(16).map(|d| d as u8)
    }
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'%' if i + 2 < bytes.len() => match (hex(bytes[i + 1]), hex(bytes[i + 2])) {
                (Some(h), Some(l)) => {
                    out.push(h * 16 + l);
                    i += 3;
                    continue;
                }
                _ => out.push(b'%'),
            },
            b'+' => out.push(b' '),
            b => out.push(b),
        }
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

struct Response {
    status: u16,
    reason: &'static str,
    body: String,
    retry_after: Option<u64>,
}

fn json<T: Serialize>(r: SourceResult<T>) -> Response {
    match r {
        Ok(v) => Response {
            status: 200,
            reason: "OK",
            body: serde_json::to_string(&v).expect("records serialize"),
            retry_after: None,
        },
        Err(SourceError::Throttled { retry_after }) => Response {
            status: 429,
            reason: "Too Many Requests",
            body: r#"{"error":"rate limited"}"#.into(),
            retry_after: retry_after.map(|d| d.as_secs()),
        },
        Err(SourceError::NotFound) => {
            Response { status: 404, reason: "Not Found", body: r#"{"error":"not found"}"#.into(), retry_after: None }
        }
        Err(SourceError::Transport(m)) => Response {
            status: 500,
            reason: "Internal Server Error",
            body: serde_json::json!({ "error": m }).to_string(),
            retry_after: None,
        },
    }
}

fn bad_request(msg: &str) -> Response {
    Response {
        status: 400,
        reason: "Bad Request",
        body: serde_json::json!({ "error": msg }).to_string(),
        retry_after: None,
    }
}

fn route(p: &SimPlatform, path: &str, query: &[(String, String)]) -> Response {
    let param = |k: &str| query.iter().find(|(q, _)| q == k).map(|(_, v)| v.as_str());
    let Some(rest) = path.strip_prefix(API_PREFIX) else {
        return json::<()>(Err(SourceError::NotFound));
    };
    let limit = match param("limit").map(str::parse::<usize>) {
        None => 50,
        Some(Ok(n)) if n >= 1 => n,
        Some(_) => return bad_request("limit must be a positive integer"),
    };
    // An unparsable cursor yields an empty page.
    let before = param("before").map(parse_timestamp);
    match rest {
        "/posts" => match before {
            Some(Err(_)) => json(p.list_posts(None, 0)),
            Some(Ok(b)) => json(p.list_posts(Some(b), limit)),
            None => json(p.list_posts(None, limit)),
        },
        "/comments" => match before {
            Some(Err(_)) => json(p.list_comments(None, 0)),
            Some(Ok(b)) => json(p.list_comments(Some(b), limit)),
            None => json(p.list_comments(None, limit)),
        },
        "/submolts" => json(p.list_submolts()),
        "/stats" => json(p.get_snapshot()),
        other => match other.strip_prefix("/agents/") {
            Some(id) if !id.is_empty() && !id.contains('/') => json(p.get_agent(id)),
            _ => json::<()>(Err(SourceError::NotFound)),
        },
    }
}

fn handle_conn(stream: TcpStream, p: &SimPlatform, c: &Counters) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    if reader.read_line(&mut line)? == 0 {
        return Ok(());
    }
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h)? == 0 || h == "\r\n" || h == "\n" {
            break;
        }
    }
    c.requests.fetch_add(1, Ordering::SeqCst);
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or("");
    let target = parts.next().unwrap_or("/");
    let resp = if method != "GET" && method != "HEAD" {
        c.write_calls.fetch_add(1, Ordering::SeqCst);
        Response {
            status: 405,
            reason: "Method Not Allowed",
            body: r#"{"error":"read-only"}"#.into(),
            retry_after: None,
        }
    } else {
        let (path, qs) = target.split_once('?').unwrap_or((target, ""));
        let query: Vec<(String, String)> = qs
            .split('&')
            .filter(|kv| !kv.is_empty())
            .map(|kv| {
                let (k, v) = kv.split_once('=').unwrap_or((kv, ""));
                (percent_decode(k), percent_decode(v))
            })
            .collect();
        route(p, path, &query)
    };
    let mut out = stream;
    let mut head = format!(
        "HTTP/1.1 {} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n",
        resp.status,
        resp.reason,
        resp.body.len()
    );
    if let Some(s) = resp.retry_after {
        head.push_str(&format!("Retry-After: {s}\r\n"));
    }
    head.push_str("\r\n");
    out.write_all(head.as_bytes())?;
    if method != "HEAD" {
        out.write_all(resp.body.as_bytes())?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_percent_escapes() {
        assert_eq!(percent_decode("2026-01-27T00%3A00%3A00%2B00%3A00"), "2026-01-27T00:00:00+00:00");
        assert_eq!(percent_decode("a+b"), "a b");
        assert_eq!(percent_decode("100%"), "100%");
        assert_eq!(percent_decode("%zz"), "%zz");
    }
}
