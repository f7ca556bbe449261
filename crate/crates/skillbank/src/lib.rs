//! File formats, backends and the command-line surface for the skill-bank
//! engine. All pipeline logic lives in `skillbank-core`; this crate adds
//! IO, HTTP, threads and configuration.

pub mod bankdir;
pub mod cli;
pub mod config;
pub mod io;
pub mod manifest;
pub mod mirror;
pub mod parallel;
pub mod remote;
pub mod scripted;

pub use skillbank_core as core;
