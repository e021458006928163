//! Spectrally parametrized feedforward networks whose input-layer eigenvalues
//! rank the relevance of input features as a byproduct of training.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod network;
pub mod optim;
pub mod relevance;
pub mod spectral;
pub mod train;

pub use error::{Error, Result};
