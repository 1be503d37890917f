pub mod cli;
pub mod data;
pub mod detection;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
