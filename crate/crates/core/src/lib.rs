//! Downscaling and gap-filling of coarse soil moisture rasters from fine
//! covariate layers.
//!
//! The modules follow the workflow: [`grid`] and [`region`] load and mask
//! data, [`covariates`] reduces covariates, [`models`] predicts, [`analysis`]
//! compares the result with the coarse product, and [`pipeline`] runs it all
//! from a config file. [`synth`] builds scenarios with a known truth.

pub mod analysis;
pub mod covariates;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod models;
pub mod pipeline;
pub mod region;
pub mod render;
pub mod synth;

pub use error::{EngineError, Result};
