//! Network builders.

mod config;
mod gan;
mod multistream;
mod network;
mod profile;

pub use config::{parse_key_values, ModelConfig};
pub use gan::{build_critic, build_unet_generator, Critic, UNetGenerator};
pub use multistream::{Classifier, MotionPairing, MultiStreamNet, StreamConfig, StreamKind, StreamPath, StreamVars};
pub use network::{build_c3d, build_network, build_p3da, build_rc3d, ModelKind, ModelOptions, NamedStage, Network, Stage};
pub use profile::ScaleProfile;
