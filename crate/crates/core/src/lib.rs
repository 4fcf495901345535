pub mod autograd;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod params;
pub mod tensor;
pub mod training;
pub mod tubelet;

pub use config::RunConfig;
pub use error::{Error, Result};
