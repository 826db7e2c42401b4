pub mod commands;
pub mod compoisson;
pub mod config;
pub mod counts;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod mcmc;
pub mod multsample;
pub mod par;
pub mod ratio;
pub mod regression;
pub mod sampling;
pub mod sarmanov;
pub mod seed;
pub mod special;

pub use error::{Error, Result};
