pub mod cli;
pub mod error;
pub mod frugal;
pub mod grades;
pub mod matroid;
pub mod model;
pub mod sampler;
pub mod solver;
pub mod upm;

pub use error::Error;
