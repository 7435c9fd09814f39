//! The read-only platform contract the collector polls.

use std::time::Duration;

use thiserror::Error;

use crate::model::api::{RemoteAgent, RemoteComment, RemotePost, RemoteStats, RemoteSubmolt};
use crate::model::Timestamp;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SourceError {
    #[error("throttled by platform (retry after {retry_after:?})")]
    Throttled { retry_after: Option<Duration> },
    #[error("not found")]
    NotFound,
    #[error("transport: {0}")]
    Transport(String),
}

pub type SourceResult<T> = Result<T, SourceError>;

/// Read operations offered by the platform. Nothing here posts, votes or
/// otherwise mutates remote state.
pub trait PlatformSource: Send + Sync {
    /// Newest-first posts created strictly before `before` (or the newest
    /// posts when `None`).
    fn list_posts(&self, before: Option<Timestamp>, limit: usize) -> SourceResult<Vec<RemotePost>>;
    /// Newest-first comments, with the same cursor semantics as posts.
    fn list_comments(&self, before: Option<Timestamp>, limit: usize) -> SourceResult<Vec<RemoteComment>>;
    fn get_agent(&self, id: &str) -> SourceResult<RemoteAgent>;
    fn list_submolts(&self) -> SourceResult<Vec<RemoteSubmolt>>;
    fn get_snapshot(&self) -> SourceResult<RemoteStats>;
}
