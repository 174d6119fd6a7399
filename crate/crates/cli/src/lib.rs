//! Command implementations behind the `oblivnet` binary.

pub mod audit;
pub mod bench_lsh;
pub mod commands;
pub mod config;
pub mod exit;
