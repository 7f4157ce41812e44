//! η-adaptive diffusion: anonymous broadcast on random graphs whose virtual
//! source spreads according to a fitted distance distribution.

pub mod adversary;
pub mod cli;
pub mod distmodel;
pub mod error;
pub mod forwarding;
pub mod graph;
pub mod protocol;
pub mod svg;

pub use error::{Error, Result};
