//! Assume-guarantee contract synthesis for networked dynamical systems.
//!
//! The crate is organized bottom-up: [`geometry`] supplies polytopes and an
//! LP solver, [`network`] models the interconnected plant, [`invariant`]
//! computes robust control invariant sets, [`epigraph`] and [`contract`]
//! synthesize valid contracts from gain functions, [`supervisor`] turns an
//! invariant set into a barrier-function safety filter and [`stl`] monitors
//! recorded traces. [`harness`] ties everything into a runnable pipeline.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`.

pub mod contract;
pub mod epigraph;
pub mod geometry;
pub mod harness;
pub mod invariant;
pub mod network;
pub mod scalar;
pub mod stl;
pub mod supervisor;

pub use scalar::Scalar;

pub type HPolytope = geometry::HPolytope<f64>;
pub type VPolytope = geometry::VPolytope<f64>;
pub type AxisBox = geometry::AxisBox<f64>;
pub type PolytopeUnion = geometry::PolytopeUnion<f64>;
pub type Matrix = geometry::Matrix<f64>;
