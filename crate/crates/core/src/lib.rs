pub mod analytics;
pub mod basis;
pub mod datastore;
pub mod error;
pub mod likelihood;
pub mod sampler;
pub mod tree;

pub use error::{Error, Result};
