//! Skill-bank core: intervention-unit statistics, skill prototypes, the
//! `SKILL.md` format, bank evolution, simulation, and evaluation metrics.
//!
//! The crate is `no_std` (with `alloc`) and performs no IO. Model calls go
//! through the [`backend::ChatBackend`] port.

#![no_std]

extern crate alloc;

pub mod agreement;
pub mod backend;
pub mod bank;
pub mod evolution;
pub mod iu;
pub mod metrics;
pub mod prompts;
pub mod prototype;
pub mod reply;
pub mod simulation;
pub mod skill;
pub mod synthesis;
pub mod taxonomy;
