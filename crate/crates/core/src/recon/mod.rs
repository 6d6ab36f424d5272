//! Reconstruction maps from undersampled k-space to real images:
//! zero-fill, TV basis pursuit, and two small learned models, plus an SGD
//! trainer for the latter.

pub mod model;
pub mod train;
pub mod tv;
pub mod unet;
pub mod varnet;

pub use model::{Conv, ParamNodes, ReconModel};
pub use train::{train, LossKind, TrainConfig, TrainExample};
pub use tv::{tv_reconstruct, TvResult, EPS_TV};
pub use unet::UnetLite;
pub use varnet::VarnetLite;
