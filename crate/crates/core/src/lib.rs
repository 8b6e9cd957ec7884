//! Simulation and recurrence analysis of the GI/GI/∞ maximum dater
//! `X_{n+1} = max(X_n - t_{n+1}, s_{n+1})`.

pub mod classify;
pub mod cli;
pub mod config;
pub mod dists;
pub mod engine;
pub mod loynes;
pub mod quad;
pub mod regen;
pub mod report;
pub mod rng;
pub mod stats;
pub mod tails;
