//! Finite-element heat-semigroup laboratory.
//!
//! Everything here exists to measure, on concrete polygonal meshes, the
//! constants that the discrete heat semigroup keeps bounded uniformly in
//! the mesh size: analyticity ratios, maximal-regularity operator norms,
//! regularized Green's-kernel L¹ norms and their dyadic space–time
//! decompositions, projection stability, and best-approximation ratios.
//!
//! The crate is organized bottom-up:
//!
//! * [`mesh`] — polygonal domains, structured triangulations, refinement;
//! * [`quadrature`] — triangle and time quadrature rules;
//! * [`sparse`] — deterministic symmetric CSR assembly targets;
//! * [`fem`] — Lagrange spaces (degrees 1 and 2), assembly, functions,
//!   projections, interpolation, discrete deltas;
//! * [`spectral`] — dense generalized eigendecomposition of the discrete
//!   Laplacian, semigroup/resolvent/fractional calculus, disk caching;
//! * [`parabolic`] — semidiscrete heat solutions with exact-in-time modal
//!   Duhamel formulas and Bochner norms;
//! * [`kernel`] — regularized point sources and two-grid Green's-kernel
//!   differences;
//! * [`dyadic`] — dyadic space–time annuli, weighted kernel sums, local
//!   energy estimates;
//! * [`probes`] — deterministic probe families and evaluation grids;
//! * [`estimators`] — the top-level constant estimators.

pub mod dyadic;
pub mod error;
pub mod estimators;
pub mod fem;
pub mod kernel;
pub mod mesh;
pub mod parabolic;
pub mod probes;
pub mod quadrature;
pub mod sparse;
pub mod spectral;

pub use error::{Error, Result};
