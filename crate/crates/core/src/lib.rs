//! Sliced-Wasserstein discrepancies between point clouds with learned
//! (amortized) slicing directions, and autoencoder training on top of them.

pub mod amortized;
pub mod autodiff;
pub mod checkpoint;
pub mod error;
pub mod ot;
pub mod pointcloud;
pub mod rng;
pub mod optim;
pub mod sliced;
pub mod sphere;
pub mod training;

pub use error::{Error, Result};
