//! Learned inference models: neural damping for belief propagation and a
//! factor-equivariant graph network.

pub mod error;
pub mod fegnn;
pub mod fenbp;
pub mod train;

pub use error::{ModelError, Result};
pub use fegnn::{FeGnnConfig, FeGnnModel};
pub use fenbp::{FeNbpConfig, FeNbpModel};
pub use train::{fit, Example, TrainConfig, TrainHistory};
