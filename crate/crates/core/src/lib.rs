//! Adversarial hallucination experiments for undersampled MRI
//! reconstruction, at synthetic-phantom scale.
//!
//! The crate covers the full pipeline: the undersampled Fourier forward
//! model, classical (zero-fill, total variation) and small learned
//! reconstructors, a targeted masked iterative FGSM attack that plants an
//! artificial detail into the reconstruction, image-quality metrics, and a
//! reference-free detection experiment that measures how well those
//! metrics separate clean from contaminated samples.
//!
//! See the `examples/` directory for one runnable example per capability,
//! and the `advmri` binary for the stage-per-subcommand pipeline.

pub mod attack;
pub mod detect;
pub mod error;
pub mod io;
pub mod metrics;
pub mod mri;
pub mod numerics;
pub mod pipeline;
pub mod recon;

pub use error::{Error, Result};
