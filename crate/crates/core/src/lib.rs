//! Triangle reflection groups in SL(3,ℝ).
//!
//! The crate builds representations of the hyperbolic triangle group
//! Γ(p1,p2,p3) from a Cartan-matrix parametrization, decides the Anosov
//! property through explicit trace and eigenvalue criteria, and computes the
//! limit curve into the flag manifold by a nested-box iteration, together
//! with numerical verification of the geometric inclusion lemmas that make
//! the iteration contract.
//!
//! Module map:
//! - [`projlin`]: dense 3×3 linear algebra and projective-plane primitives
//! - [`cartan`]: Cartan matrices, normal forms, representation builder
//! - [`group`]: word arithmetic, subdivision alphabets, cached evaluation
//! - [`hyperbolic`]: the reference hyperbolic structure and boundary codes
//! - [`classify`]: traces, discriminant, critical parameters, Anosov verdict
//! - [`boxes`]: the invariant conic, the hexagonal box, inclusion checks
//! - [`limitcurve`]: boundary maps ξ⁽¹⁾, ξ⁽²⁾ and curve diagnostics

pub mod boxes;
pub mod cartan;
pub mod classify;
pub mod group;
pub mod hyperbolic;
pub mod limitcurve;
pub mod projlin;
pub mod tol;

pub use tol::Tolerances;
