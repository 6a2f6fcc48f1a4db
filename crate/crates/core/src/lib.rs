//! Bi-stride multi-scale graph hierarchies for mesh-based simulation, and a
//! compact multi-scale message-passing network trained over them.
//!
//! The pipeline: read a mesh ([`mesh`]), derive its node graph ([`graph`]),
//! pool it into a hierarchy by striding BFS frontiers ([`bistride`]), build
//! non-parametric inter-level transitions ([`transition`]), and run an
//! encode-process-decode network ([`model`], [`nn`]) through a V-shaped
//! traversal of the levels, trained with exact reverse-mode gradients
//! ([`train`]). [`heat1d`] generates the steady-state sticks benchmark that
//! contrasts topology-based against proximity-based coarsening.
//!
//! Everything is deterministic for a fixed seed: reductions run in fixed
//! orders and ties break toward smaller indices, so repeated runs (and the
//! `parallel` feature, on by default) produce bitwise-identical results.

pub mod bistride;
pub mod dense;
pub mod error;
pub mod graph;
pub mod heat1d;
pub mod mesh;
pub mod model;
pub mod nn;
pub mod train;
pub mod transition;

pub use error::{Error, Result};
