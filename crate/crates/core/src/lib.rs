//! Nonpositively-curved metric data on labeled graphs and its spectral
//! realization as a discrete electromagnetic field theory.
//!
//! The library is organized around two faces of the same system of equations:
//!
//! * the *geometric* side — labeled graphs with rational vertex charges and
//!   edge intersection indices, whose isometric states (fiber lengths and
//!   angles) solve the compatibility equation
//!   `k_v l_v = Σ_{w∈∂v} (cos ω_w / b_w) l_{∂₊w}`;
//! * the *spectral* side — a finite spectral triple over the graph, a U(1)
//!   gauge theory on it, and the action `S(∇,ξ) = YM(∇) + E_∇(ξ) − m²‖ξ‖²`
//!   whose critical configurations mirror the isometric states.
//!
//! Module map:
//!
//! * [`graph`] — labeled graphs, gluing matrices, charges, circuits;
//! * [`compat`] — compatibility equation, geometrizability criterion,
//!   decomposition of states into dipoles, feasibility solver;
//! * [`spectral`] — block spectral triple, form calculus, Connes distance;
//! * [`gauge`] — sections, hermitian structures, connections, curvature;
//! * [`action`] — energy, Yang–Mills and total action, Euler–Lagrange
//!   residuals in operator and ψ-coordinate form, variation checks;
//! * [`solutions`] — closed-form critical configurations, the ρ-band
//!   classifier, and the geometric → spectral dictionary;
//! * [`io`] — JSON schemas for all of the above;
//! * [`numeric`] — small dense least-squares and eigenvalue helpers.

pub mod action;
pub mod compat;
pub mod gauge;
pub mod graph;
pub mod io;
pub mod numeric;
pub mod solutions;
pub mod spectral;

pub use graph::{GluingMatrix, LabeledGraph, OrientedEdge};
