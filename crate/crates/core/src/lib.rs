//! Desk-scale surrogate for compressor inter-row flow fields.
//!
//! The pipeline runs from tip-clearance samples to predicted flow fields and
//! on to overall compressor performance:
//!
//! - [`synth`]: Latin-hypercube clearance sampling and a parametric flow-field
//!   generator standing in for CFD ground truth.
//! - [`tensor`]: dense tensors, differentiable 3D operations and a reverse-mode tape.
//! - [`net`]: the residual 3D encoder-decoder, its inputs and checkpoints.
//! - [`aero`]: mass-flow averaging and overall performance.
//! - [`train`]: splitting, standardization and the Adam/MSE loop.
//! - [`report`]: accuracy metrics and CSV/SVG exports.

pub mod aero;
pub mod config;
pub mod error;
pub mod field;
pub mod net;
pub mod par;
pub mod report;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
