//! Synthetic gesture-video dataset with analytic depth, and the
//! preprocessing and augmentation applied to its clips.

pub mod clip;
pub mod error;
pub mod filters;
pub mod scene;
pub mod split;
pub mod store;

pub use clip::{frame_indices, segment_three_frames, Augment, Clip, Preprocess, CLIP_FRAMES};
pub use error::{DataError, Result};
pub use filters::{edge_enhance, gaussian_noise, lanczos_resize, random_rotate, rotate, rotation_angle};
pub use scene::{generate_sample, GestureVideo, SceneSpec, ShapeKind, Trajectory, CLASS_COUNT, CLASS_NAMES};
pub use split::{split_dataset, DatasetManifest, GenConfig, SampleEntry, Split, SplitCounts};
pub use store::{generate_dataset, load_sample, read_png, sample_video, save_sample, write_png, Dataset, MANIFEST_FILE};
