//! Service layer for reauthor: on-disk persistence, a persistent job
//! queue with worker threads, the HTTP API, the batch evaluation harness
//! and the `reauthor` command line.

pub mod api;
pub mod cli;
pub mod data;
pub mod eval;
pub mod jobs;
pub mod service;

pub use service::{Service, ServiceConfig, ServiceError};
