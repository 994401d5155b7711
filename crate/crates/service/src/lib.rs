//! HTTP experiment service: live participant sessions backed by an
//! append-only event log, plus the offline lab operations.

pub mod app;
pub mod config;
pub mod content;
pub mod error;
pub mod lab;
pub mod receiver;
pub mod session;
pub mod store;

pub use app::{router, serve, spawn, AppState};
pub use config::ServiceConfig;
pub use error::ServiceError;
