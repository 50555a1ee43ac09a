pub mod data;
pub mod encodings;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod metrics;
pub mod model;
pub mod seed;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
