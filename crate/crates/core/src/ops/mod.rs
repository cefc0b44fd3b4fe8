//! Differentiable kernels. Each op is a method on [`Graph`](crate::Graph)
//! that computes its forward value and registers its backward rule.

pub mod basic;
pub mod conv;
pub mod pool;
pub mod resample;

pub use basic::Activation;
pub use conv::{conv3d_forward, Conv2dSpec, ConvSpec};
pub use pool::{PoolMode, PoolSpec};
pub use resample::{dropout_mask, InterpMode};
