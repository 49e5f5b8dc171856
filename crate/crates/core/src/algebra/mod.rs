//! Symbolic side: invariant cores, their point-polynomial kernels and the
//! multiple integration that turns a kernel into a polynomial in central
//! moments.
//!
//! Integrating a monomial `Π_i x_i^p_i y_i^q_i R_i^a_i G_i^b_i B_i^g_i` over
//! independent copies of the image domain factorizes into the product of
//! moments `Π_i scU(p_i, q_i, a_i, b_i, g_i)`; a point that does not occur
//! in the monomial contributes the area `scU(0,0,0,0,0)`.

mod core_graph;
mod enumerate;
mod oracle;
mod polynomial;

pub use core_graph::CoreGraph;
pub use enumerate::{canonical_form, enumerate_color_cores, enumerate_cores, enumerate_shape_cores, EnumerationRule};
pub use oracle::{centered_samples, tuple_sum};
pub use polynomial::{
    color_primitive, format_rational, parse_rational, shape_primitive, MomentPolynomial, PointExponents, PointMonomial,
    PointPolynomial, Rational, TermRecord,
};

#[cfg(test)]
pub(crate) use polynomial::int;

use crate::error::{Error, Result};
use crate::moments::MomentKey;

/// Product of all shape and color primitives of `core`, expanded.
pub fn build_kernel(core: &CoreGraph) -> PointPolynomial {
    let mut kernel = PointPolynomial::one();
    for &(i, j) in core.shape_edges() {
        kernel = kernel.mul(&shape_primitive(i, j).expect("core edges are valid"));
    }
    for t in core.color_triples() {
        kernel = kernel.mul(&color_primitive(t[0], t[1], t[2]).expect("core triples are valid"));
    }
    kernel
}

/// Integrates `kernel` over `num_points` independent copies of the image
/// domain.
pub fn integrate(kernel: &PointPolynomial, num_points: usize) -> Result<MomentPolynomial> {
    if kernel.max_point() > num_points {
        return Err(Error::contract(format!(
            "kernel references point {} but only {} points are integrated",
            kernel.max_point(),
            num_points
        )));
    }
    Ok(MomentPolynomial::from_terms(kernel.terms().map(|(m, c)| {
        let mut keys: Vec<MomentKey> = m.exponents().iter().map(|&e| MomentKey::from_array(e)).collect();
        keys.resize(num_points, MomentKey::AREA);
        (keys, c.clone())
    })))
}

/// `integrate(build_kernel(core), core.num_points())`.
pub fn expand_core(core: &CoreGraph) -> MomentPolynomial {
    integrate(&build_kernel(core), core.num_points()).expect("kernel points lie within the core")
}
