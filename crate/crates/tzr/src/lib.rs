//! Retrieval service and command-line front end.

pub mod api;
pub mod cli;
pub mod config;
pub mod encoder_server;
pub mod http_error;
pub mod report;
