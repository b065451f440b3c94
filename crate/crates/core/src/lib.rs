//! Conditional-GAN colourization of grayscale images in CIELAB space.
//!
//! A U-Net generator predicts the `ab` chroma planes from normalised
//! lightness and classifies the scene from its bottleneck. Training combines
//! an adversarial term with per-pixel L1, classification and perceptual
//! losses. The crate also carries the data pipeline, a full-reference
//! quality metric suite and the `colorgan` command line tool.

pub mod cli;
pub mod colorspace;
pub mod dataio;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod networks;
pub mod trainer;
mod util;

pub use error::{Error, Result};
