//! Rotor-router walks on finite multigraphs and regular trees.
//!
//! * [`graph`]: multigraphs with a sink, rotor configurations, recurrence.
//! * [`walk`]: single- and multi-chip rotor-router dynamics.
//! * [`group`]: the rotor-router group and the sandpile group.
//! * [`tree`]: finite and lazily materialized infinite regular trees,
//!   aggregation and escape experiments.
//! * [`escape`]: the calculus of escape sequences on the ternary tree.
//! * [`acceptance`]: end-to-end verification of the library's claims.

pub mod acceptance;
pub mod escape;
pub mod graph;
pub mod group;
pub mod linalg;
pub mod tree;
pub mod walk;
