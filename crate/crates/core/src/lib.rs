pub mod classifiers;
pub mod cli;
pub mod error;
pub mod gram;
pub mod network;
pub mod optim;
pub mod pipeline;
pub mod seed;
pub mod styletransfer;
pub mod synthetic;
pub mod tensor;
pub mod tsne;

pub use error::{Error, Result};
pub use tensor::{Element, Tensor};
