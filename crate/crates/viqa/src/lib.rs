//! Quality assessment toolkit for omnidirectional (equirectangular 360)
//! images: classic full-reference metrics, their spherical variants, and a
//! trainable patch-weighted quality predictor with an adversarial critic.

pub mod distortion;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod raster;
pub mod sphere;
pub mod stats;
pub mod train;
