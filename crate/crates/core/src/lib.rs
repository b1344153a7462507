//! Hyperspectral band selection and pseudo-RGB toolkit.
//!
//! Two routes reduce a hypercube to three channels: greedy joint mutual
//! information band selection behind a contrast signal-to-noise prefilter
//! ([`selection`]), and principal components fitted on sampled pixels
//! ([`pca`]). [`pseudorgb`] renders either result, [`metrics`] scores
//! segmentation masks produced from the renderings, and [`synthcube`]
//! generates scenes with known ground truth.

pub mod bandstats;
pub mod cli;
pub mod cube_io;
pub mod error;
pub mod metrics;
pub mod pca;
pub mod pseudorgb;
pub mod rng;
pub mod selection;
pub mod synthcube;

pub use error::{Error, Result};
