//! HTTP API, client and command-line front end.

pub mod api;
pub mod client;
pub mod commands;
pub mod platform;
