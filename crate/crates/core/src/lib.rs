//! Patch-based 3D vessel segmentation trained with maximum-intensity-projection
//! loss terms.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod inference;
pub mod labelprep;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod phantom;
pub mod trainer;
pub mod volume;

pub use error::{Error, Result};
