//! Composite blocks. Parameters are registered as `<block>.<layer>.weight`,
//! `.bias` or `.gamma`.

mod layers;
mod planar;
mod residual;

pub use layers::{Conv2dLayer, Conv3dLayer, LinearLayer};
pub use planar::{DeconvBlock, DeconvConfig, DoConv, SelfAttention2d};
pub use residual::{stack_pool, P3dBlockA, Rc3dBlock, ResidualConfig};
