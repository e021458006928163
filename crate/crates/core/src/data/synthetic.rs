//! Synthetic binary classification benchmarks with known feature relevance.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Error, Result};

/// Per-feature class-conditional normal distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mu_class0: f64,
    pub mu_class1: f64,
    pub sigma: f64,
}

/// Class-1 means of the default 20-feature benchmark. Ten entries are zero
/// (no signal); the others form the ladder 0.1 … 3.0 placed at fixed,
/// scattered positions.
pub const DEFAULT_MU_CLASS1: [f64; 20] = [
    0.8, 0.0, 0.1, 0.0, 1.8, 0.0, 0.0, 2.4, 0.4, 0.0, 1.4, 0.0, 0.2, 3.0, 0.0, 0.0, 0.6, 0.0, 1.0,
    0.0,
];

/// Sign-flip probabilities of the four correlated pairs.
pub const DEFAULT_P_VALUES: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

/// Unit variance, class-0 means at zero, class-1 means from [`DEFAULT_MU_CLASS1`].
pub fn default_independent_spec() -> Vec<GaussianSpec> {
    DEFAULT_MU_CLASS1
        .iter()
        .map(|&mu| GaussianSpec {
            mu_class0: 0.0,
            mu_class1: mu,
            sigma: 1.0,
        })
        .collect()
}

fn labels_for(samples_per_class: usize) -> Vec<usize> {
    let mut labels = vec![0; samples_per_class];
    labels.resize(2 * samples_per_class, 1);
    labels
}

/// Independent normal features; class-0 rows first, then class-1 rows.
///
/// Ground truth relevance is `|μ₀ − μ₁|` per feature.
pub fn gen_independent_gaussians(
    spec: &[GaussianSpec],
    samples_per_class: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if spec.is_empty() {
        return Err(Error::InvalidArgument("empty gaussian spec".into()));
    }
    if let Some((d, s)) = spec.iter().enumerate().find(|(_, s)| !(s.sigma > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "feature {d} has nonpositive sigma {}",
            s.sigma
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.len();
    let labels = labels_for(samples_per_class);
    let mut features = Array2::zeros((labels.len(), d));
    for (mut row, &c) in features.rows_mut().into_iter().zip(&labels) {
        for (v, s) in row.iter_mut().zip(spec) {
            let mu = if c == 0 { s.mu_class0 } else { s.mu_class1 };
            let z: f64 = rng.sample(StandardNormal);
            *v = mu + s.sigma * z;
        }
    }
    let gt = spec
        .iter()
        .map(|s| (s.mu_class0 - s.mu_class1).abs())
        .collect();
    LabeledDataset::new("independent-gaussians", features, labels, Some(gt))
}

/// Ten features: four correlated pairs `(x_{2n}, x_{2n+1})` and two noise columns.
///
/// `x_{2n} ~ N(0, 1)`. Class 0 copies it into `x_{2n+1}`; class 1 copies it
/// with probability `1 − p_n` and negates it with probability `p_n`.
/// `x_8, x_9 ~ N(0, 1)` for both classes.
pub fn gen_correlated_gaussians(
    p_values: &[f64],
    samples_per_class: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if p_values.len() != 4 {
        return Err(Error::InvalidArgument(format!(
            "expected 4 pair probabilities, got {}",
            p_values.len()
        )));
    }
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidArgument(format!(
            "pair probability {p} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = labels_for(samples_per_class);
    let mut features = Array2::zeros((labels.len(), 10));
    for (mut row, &c) in features.rows_mut().into_iter().zip(&labels) {
        for (n, &p) in p_values.iter().enumerate() {
            let x: f64 = rng.sample(StandardNormal);
            let flip = rng.random::<f64>() < p;
            row[2 * n] = x;
            row[2 * n + 1] = if c == 1 && flip { -x } else { x };
        }
        row[8] = rng.sample(StandardNormal);
        row[9] = rng.sample(StandardNormal);
    }
    let mut gt = Vec::with_capacity(10);
    for &p in p_values {
        gt.extend([p, p]);
    }
    gt.extend([0.0, 0.0]);
    LabeledDataset::new("correlated-gaussians", features, labels, Some(gt))
}
