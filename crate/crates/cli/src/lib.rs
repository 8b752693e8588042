//! Command-line companion to `scvae-core`: configuration files, dataset
//! and adjacency formats, checkpoints, run manifests, and the five
//! commands (`simulate`, `train`, `predict`, `ace`, `benchmark`).
//!
//! All randomness flows from each command's single `seed` through named
//! substreams, so any command rerun with the same inputs reproduces its
//! numeric outputs byte for byte (the manifest differs only in wall-clock
//! timing).

#![deny(unsafe_code)]
#![warn(missing_docs)]

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod io;
pub mod manifest;
