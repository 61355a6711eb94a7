pub mod cli;
pub mod error;
pub mod graphs;
pub mod mcclt;
pub mod paths;
pub mod pointproc;
pub mod scores;
pub mod spectral;
pub mod stabilization;

pub use error::{Error, Result};
