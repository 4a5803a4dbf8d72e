//! Numerical laboratory for rotationally symmetric self-shrinking doughnuts
//! and the ancient mean curvature flows built from their perturbations.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod construction;
pub mod entropy;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod io;
pub mod reference;
pub mod shooting;
pub mod svg;

pub use error::{LabError, Result};
pub use geometry::{Point, ProfileCurve, Topology};
