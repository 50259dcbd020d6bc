//! Exact subgraph constraints for Max-Cut, stable set and coloring SDP
//! relaxations, with a bundle method for the Lagrangian dual.

pub mod atlas;
pub mod bundle;
pub mod driver;
pub mod error;
pub mod esc;
pub mod graph;
pub mod problem;
pub mod separation;
pub mod sdp;

pub use error::{Error, Result};
pub use problem::Problem;
