pub mod analysis;
pub mod coding;
pub mod config;
pub mod error;
pub mod experiments;
pub mod gabor;
pub mod image;
pub mod ndp;
pub mod tracking;
mod spectral;

pub use error::{Error, Result};
