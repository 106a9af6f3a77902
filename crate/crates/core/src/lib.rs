pub mod nn;
pub mod frontend;
pub mod lora;
mod layers;
pub mod error;
pub mod encoder;
pub mod bridge;
pub mod decoder;

pub use error::ModelError;
pub mod model;
pub mod metrics;
pub mod fluency;
pub mod data;
pub mod config;
pub mod selftest;
