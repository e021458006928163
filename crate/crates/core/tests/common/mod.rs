#![allow(dead_code)]

use std::path::PathBuf;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use specrel::network::{loss, Architecture, Network, Penalty, PenaltyScope, SpectralLayers};
use specrel::spectral::SpectralMode;

/// Directory with the four MNIST IDX files: `SPECREL_MNIST_DIR`, else `<workspace>/data/mnist`.
pub fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("SPECREL_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    let files = [
        "train-images-idx3-ubyte",
        "train-labels-idx1-ubyte",
        "t10k-images-idx3-ubyte",
        "t10k-labels-idx1-ubyte",
    ];
    files.iter().all(|f| dir.join(f).is_file()).then_some(dir)
}

/// Worst-case comparison of analytic and central-difference gradients.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub params: usize,
    pub worst_relative: f64,
    pub failures: usize,
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_RELATIVE: f64 = 1e-4;
pub const FD_ABSOLUTE_FLOOR: f64 = 1e-8;

/// Random 4-3-2 network (spectral first layer) with random parameters and data.
pub fn random_case(
    seed: u64,
    mode: SpectralMode,
    spectral: SpectralLayers,
) -> (Network, Array2<f64>, Vec<usize>, Penalty) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arch = Architecture {
        input_dim: 4,
        hidden: vec![3],
        n_classes: 2,
        spectral,
        mode,
    };
    let mut net = Network::init(&arch, &mut rng).unwrap();
    // Redraw until no true-class probability sits near the 1e-12 floor, where the loss is flat.
    let (x, y) = loop {
        let params: Vec<f64> = (0..net.param_count())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        net.set_params(&params).unwrap();
        let x = Array2::from_shape_simple_fn((6, 4), || rng.sample(StandardNormal));
        let y: Vec<usize> = (0..6).map(|_| rng.random_range(0..2)).collect();
        let p = net.predict(x.view()).unwrap();
        if y.iter().enumerate().all(|(i, &c)| p[[i, c]] > 1e-9) {
            break (x, y);
        }
    };
    let penalty = Penalty {
        coefficient: rng.random_range(0.0..0.1),
        scope: if rng.random::<bool>() {
            PenaltyScope::All
        } else {
            PenaltyScope::First
        },
    };
    (net, x, y, penalty)
}

fn objective(net: &Network, x: &Array2<f64>, y: &[usize], penalty: &Penalty) -> f64 {
    let pass = net.forward(x.view()).unwrap();
    loss(pass.probabilities().view(), y, net, penalty).unwrap()
}

/// Compares every analytic gradient entry against `(L(θ+h) − L(θ−h)) / 2h`.
pub fn grad_check(net: &Network, x: &Array2<f64>, y: &[usize], penalty: &Penalty) -> GradCheck {
    let pass = net.forward(x.view()).unwrap();
    let analytic = net.backward(&pass, y, penalty).unwrap().flatten();
    let theta = net.params();
    assert_eq!(analytic.len(), theta.len());
    let mut probe = net.clone();
    let mut out = GradCheck {
        params: theta.len(),
        worst_relative: 0.0,
        failures: 0,
    };
    for i in 0..theta.len() {
        let mut t = theta.clone();
        t[i] = theta[i] + FD_STEP;
        probe.set_params(&t).unwrap();
        let up = objective(&probe, x, y, penalty);
        t[i] = theta[i] - FD_STEP;
        probe.set_params(&t).unwrap();
        let down = objective(&probe, x, y, penalty);
        let numeric = (up - down) / (2.0 * FD_STEP);
        let diff = (analytic[i] - numeric).abs();
        let rel = diff / analytic[i].abs().max(numeric.abs()).max(FD_ABSOLUTE_FLOOR);
        out.worst_relative = out.worst_relative.max(rel);
        if rel > FD_RELATIVE {
            out.failures += 1;
        }
    }
    out
}

/// Label-file scan independent of the crate's IDX reader: counts of each digit.
pub fn scan_label_counts(path: &std::path::Path) -> [usize; 10] {
    let bytes = std::fs::read(path).unwrap();
    assert_eq!(&bytes[..4], &[0, 0, 8, 1]);
    let n = u32::from_be_bytes(bytes[4..8].try_into().unwrap()) as usize;
    assert_eq!(bytes.len(), 8 + n);
    let mut counts = [0; 10];
    for &b in &bytes[8..] {
        counts[b as usize] += 1;
    }
    counts
}
