//! Link-level simulator for zero-padded OTFS with Zadoff-Chu pilots in the
//! zero-pad rows.
//!
//! The receiver estimates the sparse delay-Doppler channel from time-domain
//! samples in two steps: OMP on the pilot-only samples, then OMP on the full
//! frame with the first-pass detected data acting as additional pilot. Data
//! is detected block by block with a delay-time MRC detector. An
//! embedded-pilot baseline and a Monte-Carlo harness are included.

pub mod channel;
pub mod config;
pub mod dictionary;
pub mod ep;
pub mod error;
pub mod grid;
pub mod harness;
pub mod mrc;
pub mod omp;
pub mod twostep;
pub mod tx;

pub use error::{Error, Result};
