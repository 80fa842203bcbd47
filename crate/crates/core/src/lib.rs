//! Detection and boundary extraction of round objects in grayscale images.
//!
//! The pipeline has three stages. A sliding-window detector scores
//! rectangular HOG descriptors to propose candidate centres. Each candidate
//! is segmented by scoring boundary likeliness along radial rays and picking
//! the best smooth closed contour with an exact divide-and-conquer dynamic
//! program ([`dp`]). Finally a descriptor whose blocks follow the estimated
//! contour ([`hog::shog`]) is scored to accept or reject the candidate.

pub mod bench;
pub mod config;
pub mod contour;
pub mod dp;
pub mod error;
pub mod hog;
pub mod image;
pub mod model;
pub mod pipeline;
pub mod stats;
pub mod synth;
pub mod training;

pub use contour::{ContourInstance, IndexRange, PolygonSolution};
pub use dp::{SolveStats, Solver, SplitScheme};
pub use error::{Error, Result};
pub use image::GrayImage;
