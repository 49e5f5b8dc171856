//! Shape-color affine moment invariants.
//!
//! The crate builds invariants of color images that are unchanged under a
//! simultaneous affine deformation of the image plane and an affine map of
//! the RGB color space. Invariants are assembled symbolically from products
//! of triangle-area and parallelepiped-volume primitives, integrated over
//! point tuples into exact polynomials in central shape-color moments, and
//! finally evaluated on moment tables measured from rasters.
//!
//! Module map:
//!
//! * [`moments`]: rasters, moment keys and central moment tables.
//! * [`algebra`]: core graphs, point polynomials, symbolic integration and
//!   core enumeration.
//! * [`invariants`]: invariant assembly, the 24-entry catalog, evaluation
//!   and dependence analysis.
//! * [`transforms`]: pixel-domain warps/recolors and the exact moment-domain map.
//! * [`eval`]: relative errors, chi-square nearest neighbour and retrieval.

pub mod algebra;
pub mod error;
pub mod eval;
pub mod invariants;
pub mod moments;
pub mod numfmt;
pub mod transforms;

pub use error::{Error, Result};
