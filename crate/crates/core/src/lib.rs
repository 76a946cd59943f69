pub mod convex;
pub mod counting;
pub mod error;
pub mod manhattan;
pub mod numeric;
pub mod potential;
pub mod saddle;
pub mod scenario;
pub mod shift;
pub mod thermo;

pub use error::{Error, Result};
