//! Edge-of-chaos kernel maps and neural tangent kernel spectra for deep
//! `(a, b)`-ReLU networks.

pub mod activation;
pub mod dataset;
pub mod empirical;
pub mod eigen;
pub mod error;
pub mod io;
pub mod kernel;
pub mod maps;
pub mod matrix;
pub mod quadrature;
pub mod series;
pub mod spectral;
pub mod sweep;
pub mod trace;
pub mod verify;

pub use activation::ActivationParams;
pub use dataset::{sample_sphere_dataset, Dataset};
pub use error::{Error, Result};
pub use matrix::Matrix;
