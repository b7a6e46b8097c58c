//! MuLA-GAN: an attention U-Net generator and PatchGAN discriminator for
//! underwater image enhancement, built on a small reverse-mode autodiff
//! engine, together with the usual underwater image-quality metrics
//! (PSNR, SSIM, UIQM, UCIQE, NIQE).
//!
//! The crate is organised bottom-up:
//!
//! * [`diffcore`] — tensors, the recording tape and every differentiable op
//!   the network needs, plus a finite-difference gradient checker.
//! * [`model`] — spatio-channel attention, residual blocks, the generator,
//!   the discriminator and the frozen perceptual feature extractor.
//! * [`objective`] — adversarial, perceptual and L1 losses.
//! * [`trainer`] — configuration, Adam, the alternating training step and
//!   the training loop.
//! * [`metrics`] — full-reference and no-reference quality metrics.
//! * [`pipeline`] — image I/O, paired datasets and the checkpoint container.

pub mod diffcore;
pub mod error;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod pipeline;
pub mod trainer;

pub use diffcore::{DType, Float, Tape, Tensor, Var};
pub use error::{Error, ErrorKind, Result};
pub use metrics::{MetricReport, NiqeModel, RgbImage};
pub use model::{Discriminator, FeatureNet, Generator, ParamStore};
pub use objective::LossWeights;
pub use pipeline::{Checkpoint, PairedSample};
pub use trainer::{RunLog, TrainConfig};
