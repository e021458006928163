//! Labelled datasets: synthetic generators, MNIST ingestion, splitting and caching.

mod dataset;
pub mod idx;
pub mod synthetic;

pub use dataset::{read_csv, split, LabeledDataset};
pub use idx::load_mnist_binary;
pub use synthetic::{
    default_independent_spec, gen_correlated_gaussians, gen_independent_gaussians, GaussianSpec,
    DEFAULT_MU_CLASS1, DEFAULT_P_VALUES,
};
