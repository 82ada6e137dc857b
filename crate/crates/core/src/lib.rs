//! Verifier-driven executable world models for deterministic grid games.
//!
//! The crate bundles a level-based game environment and its line protocol,
//! an append-only trace store, rule-based world models, the two verifiers,
//! a planner with a lockstep plan executor, a scripted controller with
//! pluggable modelers, and efficiency scoring.

pub mod controller;
pub mod env;
pub mod exec;
pub mod model;
pub mod modelers;
pub mod palette;
pub mod par;
pub mod plan;
pub mod protocol;
pub mod scoring;
pub mod trace;
pub mod verify;
