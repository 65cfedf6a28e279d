//! Bi-modal key-node codec for dynamic triangle-mesh sequences.
//!
//! Each P-frame is predicted by deforming the previously decoded frame with a
//! sparse set of key nodes. Nodes in rigid regions carry rotation and
//! translation; nodes in deformation-rich regions carry a decomposed affine
//! transform (rotation, translation, scaling, shearing) whose enabled
//! components are picked by a Lagrangian rate-distortion search. Transform
//! parameters are quantized and Huffman coded from a parametric Cauchy model,
//! with translations predicted spatially (spiral traversal of the node graph)
//! or spatio-temporally (per-body-part representative motion).

pub mod affine;
pub mod codec;
pub mod deform;
pub mod entropy;
pub mod error;
pub mod keynodes;
pub mod mesh;
pub mod predcode;
pub mod rdopt;
pub mod synth;

pub use error::{Error, Result};

/// Positions, translations and other 3-vectors.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3×3 linear maps.
pub type Mat3 = nalgebra::Matrix3<f64>;
