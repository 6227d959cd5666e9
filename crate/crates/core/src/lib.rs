//! Quantitative toolkit for uniformly hyperbolic planar and toral maps.

// `!(a < b)` is used on purpose so NaN inputs fail range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod error;
pub mod geometry;
pub mod io;
pub mod manifold;
pub mod maps;
pub mod partition;
pub mod reproduce;
pub mod shadowing;
pub mod symbolic;

pub use error::{Error, Result};
pub use geometry::{Interval, Mat2, Point2, Space, Vec2};
pub use maps::{HyperbolicityData, SplittingFrame, SystemModel};
