pub mod cli;
pub mod data;
pub mod density;
pub mod error;
pub mod image;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
