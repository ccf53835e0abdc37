//! HTTP service and command-line tools around `eventsift-core`.

pub mod api;
pub mod config;

pub use api::{router, AppState};
pub use config::ServerConfig;
