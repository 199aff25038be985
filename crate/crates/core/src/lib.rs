pub mod error;
pub mod events;
pub mod frame;
pub mod metrics;
pub mod model;
pub mod rain;
pub mod nn;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
