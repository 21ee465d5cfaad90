//! A two-level sparse U-Net of attention blocks, its training loop and metrics.

mod config;
mod data;
mod eval;
mod net;
mod train;

pub use config::{apply_override, ModelConfig, RegionSource, RunConfig, TemperatureSchedule, TrainConfig};
pub use data::{prepare_scene, scene_grid, SceneData};
pub use eval::{confusion_matrix, evaluate, metrics_from_confusion, EvalReport};
pub use net::{BlockTraceEntry, Model, ModelOutput};
pub use train::{train, EpochLog, TrainReport};

#[cfg(test)]
mod tests;
