//! Minimal CNN kernel: convolution, batch norm, ReLU, dropout, dense and
//! softmax layers with backprop, Adam/SGD, gradient checking and a
//! checksummed model file.

pub mod error;
pub mod float;
pub mod gradcheck;
pub mod io;
pub mod model;
pub mod optim;
pub mod spec;
pub mod tensor;

pub use error::NnError;
pub use float::Float;
pub use model::{LossGrads, Mode, Model, ModelMeta};
pub use optim::{train_step, OptimState, Optimizer};
pub use spec::{LayerSpec, ModelSpec, Padding};
pub use tensor::Tensor;
