//! Fictitious-domain fluid-structure interaction with a distributed
//! Lagrange multiplier on a Cartesian background grid.

pub mod coupling;
pub mod fem;
pub mod geometry;
pub mod mesh;
pub mod simulator;
pub mod solid;
pub mod solver;
pub mod sparse;
