//! Minimal reverse-mode differentiable tensor engine.
//!
//! Values live in a [`Tape`]; every op appends a node holding its output and
//! whatever forward context its backward rule needs. [`Tape::backward`]
//! replays the nodes in reverse and accumulates gradients into the
//! `requires_grad` leaves. Layout is fixed to row-major N×C×H×W and
//! convolutions use the cross-correlation convention.

mod conv;
mod float;
pub mod gradcheck;
mod norm;
mod ops;
mod tape;
mod tensor;

pub use conv::ConvSpec;
pub use float::{DType, Float};
pub use gradcheck::{finite_diff_check, finite_diff_check_coords, finite_diff_report, FdCoord, FdReport, DEFAULT_EPS};
pub use norm::BatchNormSpec;
pub use ops::{Activation, BinaryKind, PoolKind, ReduceKind, Rhs};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

/// Floor applied to denominators and log arguments.
pub const GUARD_EPS: f64 = 1e-12;
