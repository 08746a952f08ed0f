pub mod charge;
pub mod coherence;
pub mod constants;
pub mod defect;
pub mod error;
pub mod inference;
pub mod io;
pub mod par;
pub mod rng;
pub mod spin_dynamics;

pub use error::{Error, Result};
