//! Dense optical flow (Farneback polynomial expansion) and the HSV motion
//! images fed to the motion stream.

pub mod error;
pub mod farneback;
pub mod frame;
pub mod motion;
pub mod poly;

pub use error::{FlowError, Result};
pub use farneback::{farneback_flow, FarnebackParams, FlowField};
pub use frame::{image_gradients, FrameGradients, IntensityFrame};
pub use motion::{flow_hue, flow_to_motion_image, hsv_to_rgb};
pub use poly::{polynomial_expansion, PolyExpansion, Quadratic};

/// Motion image for a pair of `[3,H,W]` RGB frames.
pub fn motion_image(prev: &rc3d_core::Tensor<f32>, next: &rc3d_core::Tensor<f32>, params: &FarnebackParams) -> Result<rc3d_core::Tensor<f32>> {
    let flow = farneback_flow(&IntensityFrame::from_rgb(prev)?, &IntensityFrame::from_rgb(next)?, params)?;
    Ok(flow_to_motion_image(&flow))
}
