//! Sample-aware RandAugment at desk scale.
//!
//! A search-free automatic data augmentation lab: a 14-operator image
//! transform kernel with continuous magnitudes, cosine-similarity difficulty
//! scoring, and an asymmetric explore/refine training loop driving a tiny
//! convolutional classifier.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod image;
pub mod mis;
pub mod model;
pub mod ops;
pub mod policy;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
pub use image::Image;
