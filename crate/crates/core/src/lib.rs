//! Periocular recognition in the visible spectrum: sclera-normalised ROI
//! extraction, hand-crafted and SIFT descriptors, comparators, verification
//! metrics and logistic score fusion.

pub mod descriptors;
pub mod error;
pub mod eval;
pub mod features;
pub mod fusion;
pub mod grid;
pub mod image;
pub mod imageproc;
pub mod io;
pub mod metrics;
pub mod sift;

pub use error::{Error, Result};
pub use image::{Circle, Eye, EyeAnnotation, GrayImage, Raster};
