//! Crowd density estimation with recurrent spatial-aware refinement.
//!
//! An initial density map is predicted by a three-column convolutional
//! feature extractor; an LSTM-driven spatial transformer then repeatedly picks
//! an affine region of the map, a local refinement network predicts a residual
//! for it, and the residual is scattered back through the inverse transform.
//!
//! Everything runs on a small tape-based autodiff engine in [`tensor`].

pub mod ablation;
pub mod checkpoint;
pub mod density;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod rng;
pub mod stn;
pub mod tensor;
pub mod train;

pub use density::{downsample_sum, generate_density, sum_count, Annotation, DensityMap};
pub use error::{Error, Result};
pub use rng::SplitMix64;
pub use stn::{AffineTransform, TransformMode, TransformParams};
pub use tensor::{Float, Graph, Tensor, Var};
