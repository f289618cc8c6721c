pub mod cli;
pub mod distribution;
pub mod error;
pub mod gibbs;
pub mod laplace;
pub mod quad;
pub mod quantile;
pub mod queueing;
pub mod rng;
pub mod sim;
pub mod special;
pub mod tam;

pub use error::{Error, Result};
