//! Desk-scale depth-estimation benchmark for the regularizer: synthetic
//! scenes, a per-pixel model, a trainer and feature diagnostics.

pub mod model;
pub mod scene;
pub mod separation;
pub mod train;

pub use model::{ModelConfig, ToyModel};
pub use scene::{gen_scene, SceneParams, SyntheticScene};
pub use separation::{feature_separation, feature_separation_set, SeparationParams};
pub use train::{batch_loss, evaluate, train_run, LrDecay, Schedule, TrainRecord, TrainSetup};
