//! Networked deployment: database servers and the auditor over mutually
//! authenticated TLS, with a small HTTP side for discovery and boards.

pub mod certs;
pub mod config;
pub mod http;
pub mod runtime;

pub use config::{NodeConfig, Role};
pub use runtime::{start, start_with, Running};

/// Logs to stderr, filtered by `RUST_LOG` (default `info`).
pub fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into());
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}
