pub mod bandit;
pub mod corral;
pub mod design;
pub mod error;
pub mod harness;
pub mod lasso;
pub mod linalg;
pub mod model;
pub mod policies;
pub mod rng;

pub use error::{Error, Result};
