//! Construction, smoothing, solving and evaluation of 2-PolyVector fields
//! over rasterized line drawings, plus a seeded synthetic dataset generator.
//!
//! Pipeline for one drawing:
//!
//! 1. [`geometry`]: lines, arcs and cubic Béziers with exact tangents.
//! 2. [`raster`]: anti-aliased rendering and the stroke mask.
//! 3. [`groundtruth`]: per-pixel direction pairs from the curves.
//! 4. [`polyvector`]: encoding into `(c₀, c₂)` and Gaussian smoothing.
//!
//! [`variational`] estimates a field from pixels alone, [`metrics`] scores a
//! prediction and [`dataset`] produces the on-disk training corpus.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dataset;
pub mod geometry;
pub mod groundtruth;
pub mod metrics;
pub mod polyvector;
pub mod raster;
pub mod variational;

pub use geometry::{Junction, Point, Primitive, Scene};
pub use groundtruth::{build_field, FieldParams, GroundTruth};
pub use metrics::EvalReport;
pub use polyvector::{decode, encode, Coefficients, DirectionPair, PolyVectorField};
pub use raster::{PixelMask, RasterImage};
