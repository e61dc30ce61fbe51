//! Deterministic 2D autonomous navigation: wavefront-propagation path
//! planning on occupancy grids combined with possibility-theory (fuzzy)
//! obstacle avoidance, plus the simulation harness to exercise it.

pub mod fuzzy;
pub mod grid;
pub mod laser;
pub mod nav;
pub mod pgm;
pub mod plan;
pub mod render;
pub mod scenario;
pub mod sim;
pub mod wavefront;
