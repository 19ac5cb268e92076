pub mod autodiff;
pub mod check;
pub mod config;
pub mod error;
pub mod experiments;
pub mod loss;
pub mod network;
pub mod optimizer;
pub mod physics;
pub mod reference;
pub mod sampling;

pub use config::RunConfig;
pub use error::{Error, Result};
