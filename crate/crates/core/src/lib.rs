pub mod concentration;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod hilbert;
pub mod linalg;
pub mod report;
pub mod rng;
pub mod rounding;
pub mod sampling;
pub mod sdp;
pub mod similarity;
