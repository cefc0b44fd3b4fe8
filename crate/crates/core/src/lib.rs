//! Differentiable spatio-temporal convolution engine.
//!
//! Everything is generic over the element type through [`Scalar`]; the
//! networks run in `f32`, see the aliases at the bottom of this file.

pub mod blocks;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod init;
pub mod io;
pub mod loss;
pub mod models;
pub mod ops;
pub mod optim;
pub mod param;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use init::Initializer;
pub use ops::{Activation, Conv2dSpec, ConvSpec, InterpMode, PoolMode, PoolSpec};
pub use optim::Optimizer;
pub use param::{ParamId, ParamStore, Parameter};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Graph32<'s> = Graph<'s, f32>;
pub type ParamStore32 = ParamStore<f32>;
