pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod dot;
pub mod encoder;
pub mod error;
pub mod features;
pub mod gradcheck;
pub mod graph;
pub mod grounding;
pub mod kg;
pub mod metrics;
pub mod params;
pub mod pipeline;
pub mod run;
pub mod synth;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
