//! Core library for a reinforcement-learning camera ISP.
//!
//! An agent observes a demosaiced RAW image through a fixed feature encoder
//! and picks image-processing tools one at a time from a mixed toolbox of
//! classic operators and small residual CNNs, trying to maximize a task
//! metric such as PSNR, detection precision/recall or depth accuracy.

pub mod agent;
pub mod env;
pub mod error;
pub mod features;
pub mod image;
pub mod metrics;
pub mod nn;
pub mod restore;
pub mod tools;

pub use error::{Error, Result};
