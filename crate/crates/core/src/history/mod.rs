//! Function segments on `[-delay, 0]` and dense solution records.

pub mod io;
mod segment;
mod trajectory;

pub use segment::{norm, Block, History, Segment};
pub use trajectory::{Trajectory, Window};
