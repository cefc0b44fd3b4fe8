//! Training loops for the video classifiers and the depth generator, and
//! the accuracy tables they report.

pub mod classifier;
pub mod error;
pub mod gan;
pub mod hyper;
pub mod inputs;
pub mod metrics;

pub use classifier::{evaluate, evaluate_split, predict, train_classifier, ClassifierRun, Evaluation};
pub use error::{Result, TrainError};
pub use gan::{generator_mse, mean_depth_baseline, predict_depth, train_gan, CriticSet, DepthFrames, GanRun, GanSchedule, SwitchMode};
pub use hyper::{mix_seed, Hyper, OptimizerKind};
pub use inputs::{collate, ClipInputs, DepthSource, StreamInputs};
pub use metrics::{accuracy, read_metrics, read_summary, write_summary, EpochRecord, Metrics, MetricsLog, SummaryRow, METRICS_FILE, TIMING_FILE};
