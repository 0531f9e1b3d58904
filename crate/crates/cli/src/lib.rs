//! Service and command-line plumbing around `triage_core`.

pub mod config;
pub mod service;
pub mod stack;
pub mod store;
