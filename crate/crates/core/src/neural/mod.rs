//! Small reverse-mode network core: dense layers, ReLU/ELU/tanh/sigmoid, a
//! gated recurrent cell, RMSProp, and a finite-difference gradient checker.
//!
//! Everything is batched over rows and runs in `f64`. Each layer's forward
//! pass returns a cache that its backward pass consumes.

mod gradcheck;
mod gru;
mod layers;
mod optim;
mod params;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, DEFAULT_FLOOR};
pub use gru::{GruCache, GruCell};
pub use layers::{elu, elu_grad, relu, sigmoid, Linear, Mlp, MlpCache};
pub use optim::RmsProp;
pub use params::{GradBuffer, ParameterSet};
pub use tensor::Tensor;
