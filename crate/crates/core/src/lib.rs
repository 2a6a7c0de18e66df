pub mod attention;
pub mod autograd;
pub mod classifier;
pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod explain;
pub mod gradsuite;
pub mod model;
pub mod synthetic;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::Tensor;
