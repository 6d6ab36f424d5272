//! On-disk formats: the KSC dataset container and model checkpoints.

pub mod checkpoint;
pub mod ksc;
