pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod muscle;
pub mod optimizer;
pub mod par;
pub mod reflex;
pub mod simulation;

pub use error::{Error, Result};
