//! Peduncle detection on coloured point clouds: cloud I/O, filtering,
//! surface normals, colour and point-feature-histogram descriptors, an SVM
//! classifier, evaluation tooling and a synthetic scene generator.

// `!(x > 0.0)` is used on purpose so NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cloud_io;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod learn;
pub mod pipeline;
pub mod preprocess;
pub mod synth;
