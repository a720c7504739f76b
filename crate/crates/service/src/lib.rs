//! HTTP worklist service and command-line tools over a triage store.
//!
//! The server exposes the worklist for a surgery date, accepts clinician
//! adjudications, and recomputes evaluation metrics over any date window.
//! State lives in two append-only logs in the store directory and is
//! rebuilt on startup.

pub mod api;
pub mod commands;
pub mod config;

pub use api::{router, AppState};
pub use config::{BackendKind, ServiceConfig};
