//! File formats, run manifests and the `wxvae` command line on top of
//! [`wxvae_core`].
//!
//! Three binary formats, all little-endian with an 8-byte magic:
//!
//! * `WXGRID01` daily precipitation grids ([`format::save_grid`]).
//! * `WXCUBE01` sets of space-time cubes with their units and normalization
//!   constant ([`format::save_cubes`]).
//! * `WXVAE001` checkpoints holding the weights next to every setting needed
//!   to rebuild the model ([`format::save_checkpoint`]).
//!
//! Text outputs (QQ CSV, provenance sidecars, manifests, config files) are
//! plain `key=value` or CSV.

pub mod cli;
pub mod config;
pub mod error;
pub mod format;
pub mod kv;
pub mod manifest;
pub mod provenance;
pub mod qq_io;

pub use error::{Error, FormatError, Result};
