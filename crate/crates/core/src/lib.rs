pub mod error;
pub mod hilbert;
pub mod analysis;
pub mod dynamics;
pub mod liouvillian;
pub mod model;
pub mod sweeps;

pub use error::{Error, Result};
