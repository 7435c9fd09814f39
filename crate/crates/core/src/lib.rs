//! Passive observatory pipeline for an agent-only social platform.
//!
//! The crate is organised as the pipeline runs: a [`simulator`] (or a real
//! HTTP endpoint) is polled by the [`collector`] into the [`store`], the
//! [`exporter`] writes date-partitioned Parquet files, and the analysis
//! stages ([`annotator`], [`riskscore`], [`replygraph`], [`reports`]) read
//! those partitions back.

pub mod annotator;
pub mod collector;
pub mod exporter;
pub mod model;
pub mod replygraph;
pub mod reports;
pub mod riskscore;
pub mod simulator;
pub mod store;
pub mod table;
