//! `PlatformSource` over the platform's HTTP GET endpoints.

use std::time::Duration;

use serde::de::DeserializeOwned;
use ureq::Agent;

use super::source::{PlatformSource, SourceError, SourceResult};
use crate::model::api::{RemoteAgent, RemoteComment, RemotePost, RemoteStats, RemoteSubmolt};
use crate::model::Timestamp;

pub const API_PREFIX: &str = "/api/v1";

pub struct HttpSource {
    base: String,
    agent: Agent,
}

impl HttpSource {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        let agent: Agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .user_agent("observatory/0.1 (read-only)")
            .build()
            .into();
        HttpSource { base: base_url.trim_end_matches('/').to_string(), agent }
    }

    fn get<T: DeserializeOwned>(&self, path: &str, query: &[(&str, String)]) -> SourceResult<T> {
        let url = format!("{}{}{}", self.base, API_PREFIX, path);
        let mut req = self.agent.get(&url);
        for (k, v) in query {
            req = req.query(*k, v);
        }
        let mut resp = req.call().map_err(|e| SourceError::Transport(e.to_string()))?;
        match resp.status().as_u16() {
            200 => {
                let body = resp.body_mut().read_to_string().map_err(|e| SourceError::Transport(e.to_string()))?;
                serde_json::from_str(&body).map_err(|e| SourceError::Transport(format!("decoding {path}: {e}")))
            }
            404 => Err(SourceError::NotFound),
            429 => {
                let retry_after = resp
                    .headers()
                    .get("retry-after")
                    .and_then(|v| v.to_str().ok())
                    .and_then(|v| v.trim().parse::<u64>().ok())
                    .map(Duration::from_secs);
                Err(SourceError::Throttled { retry_after })
            }
            code => Err(SourceError::Transport(format!("GET {path}: HTTP {code}"))),
        }
    }

    fn page_query(before: Option<Timestamp>, limit: usize) -> Vec<(&'static str, String)> {
        let mut q = vec![("limit", limit.to_string())];
        if let Some(b) = before {
            q.push(("before", b.to_string()));
        }
        q
    }
}

impl PlatformSource for HttpSource {
    fn list_posts(&self, before: Option<Timestamp>, limit: usize) -> SourceResult<Vec<RemotePost>> {
        self.get("/posts", &Self::page_query(before, limit))
    }

    fn list_comments(&self, before: Option<Timestamp>, limit: usize) -> SourceResult<Vec<RemoteComment>> {
        self.get("/comments", &Self::page_query(before, limit))
    }

    fn get_agent(&self, id: &str) -> SourceResult<RemoteAgent> {
        let safe: String = id.chars().filter(|c| c.is_ascii_alphanumeric() || "-_.".contains(*c)).collect();
        if safe != id {
            return Err(SourceError::NotFound);
        }
        self.get(&format!("/agents/{safe}"), &[])
    }

    fn list_submolts(&self) -> SourceResult<Vec<RemoteSubmolt>> {
        self.get("/submolts", &[])
    }

    fn get_snapshot(&self) -> SourceResult<RemoteStats> {
        self.get("/stats", &[])
    }
}
