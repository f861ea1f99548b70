//! Configuration, the control-protocol server and its message layer.

pub mod config;
pub mod protocol;
pub mod server;

pub use config::{Config, ConfigError, DEFAULT_PORT, PORT_ENV};
pub use server::{serve, start, ServeOptions, ServerHandle};
