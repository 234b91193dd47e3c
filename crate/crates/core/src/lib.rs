pub mod error;
pub mod estimator;
pub mod eval;
pub mod augment;
pub mod filters;
pub mod gru;
pub mod pool;
pub mod quat;
pub mod resample;
pub mod rng;
pub mod sim;
pub mod training;

pub use error::{Error, Result};
pub use estimator::{Estimator, InitPolicy};
pub use quat::{Quaternion, Vec3};
pub use sim::{ImuSample, ImuSequence};
