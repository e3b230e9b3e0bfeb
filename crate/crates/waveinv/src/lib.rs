//! Reconstruction of a spatially varying dielectric permittivity from
//! time-domain boundary measurements of an electric field.
//!
//! A known pulse illuminates one side of a box; the field it excites is
//! recorded on chosen boundary faces. The unknown coefficient is recovered by
//! minimising a regularised misfit between those records and the fields the
//! candidate coefficient would produce, with gradients supplied by a second
//! (adjoint) wave solve run backwards in time. An element-wise error
//! indicator then drives mesh refinement, and the minimisation repeats on the
//! finer mesh until the iterates stabilise.
//!
//! The crate is organised along that pipeline:
//!
//! * [`mesh`] — tetrahedral box meshes, red refinement with conformity
//!   closure, nodal interpolation between meshes;
//! * [`grid`] — time grids and the explicit-stepping stability rule;
//! * [`operators`] — lumped mass, stiffness action and boundary functionals
//!   for piecewise-linear vector fields;
//! * [`jumps`] — face-normal and time-difference jump magnitudes used by the
//!   error indicators;
//! * [`wave`] — the explicit direct and adjoint solvers, sources, boundary
//!   records and discrete energy;
//! * [`objective`] — the regularised misfit, its exact discrete gradient and
//!   the admissible-set projection;
//! * [`optimizer`] — conjugate-gradient minimisation with a step safeguard;
//! * [`estimator`] — element indicators and threshold marking;
//! * [`adaptivity`] — the refine–resolve loop tying the layers together;
//! * [`phantom`], [`experiment`], [`config`] — synthetic targets, data
//!   generation with optional noise, and end-to-end experiment runs;
//! * [`vtk`], [`report`] — output writers (legacy VTK, CSV, run manifest).

pub mod adaptivity;
pub mod config;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod geo;
pub mod grid;
pub mod jumps;
pub mod mesh;
pub mod objective;
pub mod operators;
pub mod optimizer;
pub mod par;
pub mod phantom;
pub mod report;
pub mod vtk;
pub mod wave;

pub use error::{Error, Result};
