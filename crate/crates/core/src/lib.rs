pub mod checks;
pub mod cli;
pub mod config;
mod error;
pub mod geometry;
pub mod gradients;
pub mod grid;
pub mod io;
pub mod keyframe;
pub mod metrics;
pub mod objective;
pub mod optim;
pub mod pipeline;
pub mod precond;
pub mod spatial;
pub mod synth;

pub use error::{Error, Result};
