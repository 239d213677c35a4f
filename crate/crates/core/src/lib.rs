pub mod cli;
pub mod error;
pub mod experiment;
pub mod features;
pub mod fusion;
pub mod geometry;
pub mod heads;
pub mod io;
pub mod keypoints;
pub mod knn;
pub mod losses;
pub mod mesh;
pub mod network;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod scenegen;
pub mod metrics;
pub mod symmetry;
pub mod train;
pub mod voting;

pub use error::{Error, Result};
