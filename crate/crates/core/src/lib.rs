pub mod align;
pub mod cli;
pub mod cma;
pub mod data;
pub mod encoder;
pub mod error;
pub mod flow;
pub mod metrics;
pub mod model;
pub mod params;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use model::{FlowModel, ModelConfig};
pub use scalar::{Dtype, Scalar};
