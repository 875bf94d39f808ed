//! Class-imbalance rebalancing for object-detection datasets by class-wise
//! style augmentation.

pub mod color;
pub mod config;
pub mod dataset;
pub mod domain;
pub mod error;
pub mod export;
pub mod pipeline;
pub mod planner;
pub mod qc;
pub mod raster;
pub mod selection;
pub mod transfer;

pub use error::{Error, Result};
