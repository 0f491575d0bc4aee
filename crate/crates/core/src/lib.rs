//! Computational machinery for a degree-2 polynomial automorphism family of C^3:
//!
//! ```text
//! f(z1, z2, z3) = (p_c(z1) + b z2 + sigma z3 (z1 - alpha), z1, lambda z1 + mu z3 + nu)
//! ```
//!
//! The crate builds, step by step, the chain of certificates that pins down the
//! dynamics of this family at a carefully chosen parameter set:
//!
//! * [`quad`] — one-dimensional quadratic dynamics: Misiurewicz parameter search,
//!   inverse-branch IFS estimates and the rescaled disk setup.
//! * [`coeffs`] — synthesis of the coefficients `mu0, mu, lambda, nu` and the
//!   third-coordinate window checks.
//! * [`map3`] — the automorphism itself: evaluation, closed-form inverse,
//!   Jacobians and scaled Jacobian products.
//! * [`horseshoe`] — cone fields, two-branch horseshoe certification, symbolic
//!   dynamics and local invariant manifolds.
//! * [`blender`] — the four inverse branches `g_j`, the open covering property
//!   and robust intersections with ss-curves.
//! * [`folds`] — folded curves and surfaces, fold transport and the tangency hunt.
//! * [`tangency`] — the initial heteroclinic tangency, generic unfolding and
//!   transversality, and the stable folded surface pipeline.
//! * [`sinks`] — attracting orbits created by unfolding a sectionally
//!   dissipative tangency.
//!
//! All quantitative checks run against a [`profile::RigorProfile`] so the same
//! code paths serve both the verbatim constants of the construction and a
//! double-precision demo regime.

pub mod blender;
pub mod coeffs;
pub mod disk;
pub mod error;
pub mod folds;
pub mod horseshoe;
pub mod interp;
pub mod jsonio;
pub mod linalg3;
pub mod map3;
pub mod newton;
pub mod poly;
pub mod profile;
pub mod quad;
pub mod sinks;
pub mod tangency;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C = num_complex::Complex64;

/// Convenience constructor.
#[inline]
pub fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}
