//! Safe receding-horizon planning for serial manipulators.
//!
//! Each planning step encloses the arm's motion over a family of braking
//! trajectories with polynomial zonotopes, turns those enclosures into
//! differentiable sphere-versus-obstacle constraints, and accepts a trajectory
//! parameter only if every constraint is certified. The enclosure comes either
//! from exact reachability or from a neural surrogate whose sphere radii are
//! inflated by split conformal calibration.

pub mod conformal;
pub mod distance;
pub mod error;
pub mod harness;
pub mod kinematics;
pub mod neural;
pub mod occupancy;
pub mod planner;
pub mod relu;
pub mod trajectory;
pub mod verify;
pub mod zonotope;

pub use error::{Error, Result};
