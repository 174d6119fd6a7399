//! Doubly-oblivious sparse neural-network training.
//!
//! Every secret-dependent choice goes through branch-free selection, and every
//! memory access the pipeline makes is recorded as a symbolic event in a
//! [`trace::TraceLog`], so runs with equal public parameters can be compared
//! event by event.

pub mod dataio;
pub mod engine;
pub mod error;
pub mod lsh;
pub mod model;
pub mod obliv;
pub mod oht;
pub mod reference;
pub mod request;
pub mod trace;

pub use engine::{Engine, PublicParams};
pub use error::{Error, Result};
pub use trace::TraceLog;
