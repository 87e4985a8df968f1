mod codec;
pub mod energysim;
pub mod error;
pub mod evalharness;
pub mod features;
pub mod geodata;
pub mod graphbuild;
pub mod ingest;
pub mod pipeline;
pub mod rainnet;

pub use error::{Error, Result};
