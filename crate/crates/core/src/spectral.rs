//! Spectral parametrization of the transfer between two adjacent layers.
//!
//! A layer of `N` departure nodes and `M` destination nodes is viewed as a
//! bipartite graph on `N + M` nodes with adjacency `A = Φ Λ Φ⁻¹`. The
//! eigenvector matrix `Φ` is lower-block triangular with identity diagonal
//! blocks and the trainable block `Ψ` (M×N) in the lower-left corner; `Λ`
//! holds one eigenvalue per node. The lower-left block of `A` is the dense
//! weight matrix, with entries
//!
//! ```text
//! w[j][i] = (λ_in[i] − λ_out[j]) · ψ[j][i]
//! ```
//!
//! In [`SpectralMode::Reduced`] the destination eigenvalues are pinned to
//! zero and the weights reduce to `w[j][i] = λ_in[i] · ψ[j][i]`, so every
//! link leaving input node `i` shares the factor `λ_in[i]`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralMode {
    /// Both departure and destination eigenvalues are trainable.
    Full,
    /// Destination eigenvalues fixed at zero.
    Reduced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralLayer {
    pub lambda_in: Array1<f64>,
    pub lambda_out: Array1<f64>,
    /// Eigenvector block, `n_out × n_in`.
    pub psi: Array2<f64>,
    pub bias: Array1<f64>,
    pub mode: SpectralMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseWeights {
    /// `n_out × n_in`.
    pub w: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseWeights {
    pub fn new(w: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if w.nrows() != bias.len() {
            return Err(Error::Shape(format!(
                "dense weights have {} rows but bias has length {}",
                w.nrows(),
                bias.len()
            )));
        }
        Ok(Self { w, bias })
    }

    pub fn n_in(&self) -> usize {
        self.w.ncols()
    }

    pub fn n_out(&self) -> usize {
        self.w.nrows()
    }
}

impl SpectralLayer {
    /// Builds a layer, checking shapes and the reduced-mode invariant.
    pub fn new(
        lambda_in: Array1<f64>,
        lambda_out: Array1<f64>,
        psi: Array2<f64>,
        bias: Array1<f64>,
        mode: SpectralMode,
    ) -> Result<Self> {
        let layer = Self {
            lambda_in,
            lambda_out,
            psi,
            bias,
            mode,
        };
        layer.check()?;
        Ok(layer)
    }

    /// Reduced-mode layer with zero destination eigenvalues and zero bias.
    pub fn reduced(lambda_in: Array1<f64>, psi: Array2<f64>) -> Result<Self> {
        let m = psi.nrows();
        Self::new(
            lambda_in,
            Array1::zeros(m),
            psi,
            Array1::zeros(m),
            SpectralMode::Reduced,
        )
    }

    pub fn n_in(&self) -> usize {
        self.psi.ncols()
    }

    pub fn n_out(&self) -> usize {
        self.psi.nrows()
    }

    pub fn check(&self) -> Result<()> {
        let (m, n) = self.psi.dim();
        if self.lambda_in.len() != n {
            return Err(Error::Shape(format!(
                "lambda_in has length {} but psi has {n} columns",
                self.lambda_in.len()
            )));
        }
        if self.lambda_out.len() != m {
            return Err(Error::Shape(format!(
                "lambda_out has length {} but psi has {m} rows",
                self.lambda_out.len()
            )));
        }
        if self.bias.len() != m {
            return Err(Error::Shape(format!(
                "bias has length {} but psi has {m} rows",
                self.bias.len()
            )));
        }
        if self.mode == SpectralMode::Reduced && self.lambda_out.iter().any(|&l| l != 0.0) {
            return Err(Error::InvalidArgument(
                "reduced-mode layer has nonzero destination eigenvalues".into(),
            ));
        }
        Ok(())
    }

    /// Dense weights according to the layer's own mode.
    pub fn materialize(&self) -> Result<DenseWeights> {
        match self.mode {
            SpectralMode::Full => materialize_full(self),
            SpectralMode::Reduced => materialize_reduced(self),
        }
    }

    /// Returns the same layer in reduced mode, discarding destination eigenvalues.
    pub fn into_reduced(mut self) -> Self {
        self.lambda_out.fill(0.0);
        self.mode = SpectralMode::Reduced;
        self
    }
}

fn require_mode(layer: &SpectralLayer, mode: SpectralMode) -> Result<()> {
    if layer.mode != mode {
        return Err(Error::InvalidArgument(format!(
            "expected a {mode:?}-mode spectral layer, got {:?}",
            layer.mode
        )));
    }
    layer.check()
}

/// `w[j][i] = (λ_in[i] − λ_out[j]) ψ[j][i]`.
pub fn materialize_full(layer: &SpectralLayer) -> Result<DenseWeights> {
    require_mode(layer, SpectralMode::Full)?;
    let mut w = layer.psi.clone();
    for ((j, i), v) in w.indexed_iter_mut() {
        *v *= layer.lambda_in[i] - layer.lambda_out[j];
    }
    Ok(DenseWeights {
        w,
        bias: layer.bias.clone(),
    })
}

/// `w[j][i] = λ_in[i] ψ[j][i]`.
pub fn materialize_reduced(layer: &SpectralLayer) -> Result<DenseWeights> {
    require_mode(layer, SpectralMode::Reduced)?;
    let w = &layer.psi * &layer.lambda_in.view().insert_axis(Axis(0));
    Ok(DenseWeights {
        w,
        bias: layer.bias.clone(),
    })
}

/// Eigenvector matrix `Φ = [[I_N, 0], [Ψ, I_M]]` for an `M×N` block `Ψ`.
pub fn build_phi(psi: ArrayView2<f64>) -> Array2<f64> {
    let (m, n) = psi.dim();
    let mut phi = Array2::eye(n + m);
    phi.slice_mut(ndarray::s![n.., ..n]).assign(&psi);
    phi
}

/// Inverse of a matrix produced by [`build_phi`], `Φ⁻¹ = 2I − Φ`.
pub fn phi_inverse(phi: ArrayView2<f64>) -> Array2<f64> {
    let k = phi.nrows();
    Array2::<f64>::eye(k) * 2.0 - phi
}

/// Relevance score per departure node: `λ̃_i = λ_in[i] · ‖Φ[:, i]‖₂`.
///
/// Column `i` of `Φ` is the unit diagonal entry stacked on column `i` of
/// `Ψ`, so the norm is `sqrt(1 + Σ_j ψ[j][i]²)`.
pub fn rescaled_eigenvalues(layer: &SpectralLayer) -> Array1<f64> {
    let sq = layer.psi.map(|v| v * v).sum_axis(Axis(0));
    Array1::from_iter(
        layer
            .lambda_in
            .iter()
            .zip(sq.iter())
            .map(|(&l, &s)| l * (1.0 + s).sqrt()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn full(lambda_in: Array1<f64>, lambda_out: Array1<f64>, psi: Array2<f64>) -> SpectralLayer {
        let m = psi.nrows();
        SpectralLayer::new(
            lambda_in,
            lambda_out,
            psi,
            Array1::zeros(m),
            SpectralMode::Full,
        )
        .unwrap()
    }

    #[test]
    fn full_equal_eigenvalues_give_zero_weights() {
        let l = full(array![0.7, 0.7], array![0.7], array![[3.0, -2.0]]);
        let d = materialize_full(&l).unwrap();
        assert!(d.w.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn full_hand_example() {
        let l = full(array![2.0, 0.0], array![1.0], array![[1.0, 1.0]]);
        assert_eq!(materialize_full(&l).unwrap().w, array![[1.0, -1.0]]);
    }

    #[test]
    fn full_matches_elementwise_oracle() {
        let lambda_in = array![0.3, -1.2, 2.5, 0.01];
        let lambda_out = array![-0.4, 1.1, 0.0];
        let psi = array![
            [0.5, -0.25, 1.5, 2.0],
            [-1.0, 0.75, 0.1, -0.3],
            [0.2, 0.9, -2.2, 1.3]
        ];
        let mut bias = Array1::zeros(3);
        bias[1] = 0.5;
        let l = SpectralLayer::new(
            lambda_in.clone(),
            lambda_out.clone(),
            psi.clone(),
            bias.clone(),
            SpectralMode::Full,
        )
        .unwrap();
        let d = materialize_full(&l).unwrap();
        for j in 0..3 {
            for i in 0..4 {
                let expect = (lambda_in[i] - lambda_out[j]) * psi[[j, i]];
                assert!((d.w[[j, i]] - expect).abs() <= f64::EPSILON * expect.abs());
            }
        }
        assert_eq!(d.bias, bias);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let err = SpectralLayer::new(
            array![1.0, 2.0, 3.0],
            array![0.0],
            array![[1.0, 1.0]],
            array![0.0],
            SpectralMode::Full,
        );
        assert!(matches!(err, Err(Error::Shape(_))));

        let mut l = full(array![1.0, 2.0], array![0.0], array![[1.0, 1.0]]);
        l.lambda_out = array![0.0, 1.0];
        assert!(matches!(materialize_full(&l), Err(Error::Shape(_))));
    }

    #[test]
    fn reduced_zero_eigenvalue_kills_column() {
        let l = SpectralLayer::reduced(
            array![1.5, 0.0, -2.0],
            array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]],
        )
        .unwrap();
        let d = materialize_reduced(&l).unwrap();
        assert!(d.w.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reduced_identity_psi() {
        let l = SpectralLayer::reduced(array![2.0, 3.0], Array2::eye(2)).unwrap();
        assert_eq!(
            materialize_reduced(&l).unwrap().w,
            array![[2.0, 0.0], [0.0, 3.0]]
        );
    }

    #[test]
    fn mode_is_enforced() {
        let l = SpectralLayer::reduced(array![1.0], array![[1.0]]).unwrap();
        assert!(materialize_full(&l).is_err());
        let f = full(array![1.0], array![0.5], array![[1.0]]);
        assert!(materialize_reduced(&f).is_err());
        assert!(SpectralLayer::new(
            array![1.0],
            array![0.5],
            array![[1.0]],
            array![0.0],
            SpectralMode::Reduced
        )
        .is_err());
    }

    #[test]
    fn phi_assembly() {
        let phi = build_phi(array![[5.0]].view());
        assert_eq!(phi, array![[1.0, 0.0], [5.0, 1.0]]);
        let z = build_phi(Array2::<f64>::zeros((3, 2)).view());
        assert_eq!(z, Array2::<f64>::eye(5));
        assert_eq!(phi_inverse(z.view()), Array2::<f64>::eye(5));
    }

    #[test]
    fn rescaled_examples() {
        let mut psi = Array2::zeros((3, 3));
        psi.column_mut(1).fill(1.0);
        psi[[0, 2]] = 9.0;
        let l = SpectralLayer::reduced(array![4.0, 2.0, 0.0], psi).unwrap();
        let s = rescaled_eigenvalues(&l);
        assert_eq!(s[0], 4.0);
        assert_eq!(s[1], 4.0);
        assert_eq!(s[2], 0.0);
    }

    /// Recovers the weight block from `A = Φ Λ Φ⁻¹` by explicit matrix products.
    #[test]
    fn adjacency_lower_block_is_the_weight_matrix() {
        let psi = array![[0.5, -1.0, 2.0], [1.5, 0.25, -0.75]];
        let lambda_in = array![0.3, -0.8, 1.7];
        let lambda_out = array![0.9, -0.2];
        let l = full(lambda_in.clone(), lambda_out.clone(), psi.clone());
        let phi = build_phi(psi.view());
        let mut diag = Array2::zeros((5, 5));
        for (k, v) in lambda_in.iter().chain(lambda_out.iter()).enumerate() {
            diag[[k, k]] = *v;
        }
        let a = phi.dot(&diag).dot(&phi_inverse(phi.view()));
        let w = materialize_full(&l).unwrap().w;
        for j in 0..2 {
            for i in 0..3 {
                assert!((a[[3 + j, i]] - w[[j, i]]).abs() < 1e-12);
            }
            assert!((a[[3 + j, 3 + j]] - lambda_out[j]).abs() < 1e-12);
        }
        for i in 0..3 {
            assert!((a[[i, i]] - lambda_in[i]).abs() < 1e-12);
        }
        assert!(a
            .slice(ndarray::s![..3, 3..])
            .iter()
            .all(|v| v.abs() < 1e-12));
    }

    fn layer_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>, Vec<f64>)> {
        (1usize..6, 1usize..6).prop_flat_map(|(m, n)| {
            (
                Just(m),
                Just(n),
                prop::collection::vec(-3.0..3.0f64, n),
                prop::collection::vec(-3.0..3.0f64, m),
                prop::collection::vec(-3.0..3.0f64, m * n),
            )
        })
    }

    proptest! {
        #[test]
        fn reduced_equals_full_with_zero_out((m, n, li, _lo, p) in layer_strategy()) {
            let psi = Array2::from_shape_vec((m, n), p).unwrap();
            let red = SpectralLayer::reduced(Array1::from(li.clone()), psi.clone()).unwrap();
            let fl = full(Array1::from(li), Array1::zeros(m), psi);
            prop_assert_eq!(materialize_reduced(&red).unwrap().w, materialize_full(&fl).unwrap().w);
        }

        #[test]
        fn phi_inverse_identity((m, n, _li, _lo, p) in layer_strategy()) {
            let psi = Array2::from_shape_vec((m, n), p).unwrap();
            let phi = build_phi(psi.view());
            let prod = phi.dot(&phi_inverse(phi.view()));
            let eye = Array2::<f64>::eye(m + n);
            prop_assert!(prod.iter().zip(eye.iter()).all(|(a, b)| (a - b).abs() <= 1e-12));
        }

        #[test]
        fn scaling_covariance((m, n, li, _lo, p) in layer_strategy(), s in prop_oneof![-4.0..-0.1f64, 0.1..4.0f64]) {
            let psi = Array2::from_shape_vec((m, n), p).unwrap();
            let base = SpectralLayer::reduced(Array1::from(li.clone()), psi.clone()).unwrap();
            let scaled = SpectralLayer::reduced(Array1::from(li) * s, psi).unwrap();
            let w0 = materialize_reduced(&base).unwrap().w;
            let w1 = materialize_reduced(&scaled).unwrap().w;
            for (a, b) in w0.iter().zip(w1.iter()) {
                prop_assert!((a * s - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
            let r0 = rescaled_eigenvalues(&base);
            let r1 = rescaled_eigenvalues(&scaled);
            for (a, b) in r0.iter().zip(r1.iter()) {
                prop_assert!((a.abs() * s.abs() - b.abs()).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }

        /// Superposition in λ and in a single ψ entry.
        #[test]
        fn reduced_is_bilinear((m, n, a, b, p) in layer_strategy(), extra in prop::collection::vec(-3.0..3.0f64, 5), alpha in -2.0..2.0f64, beta in -2.0..2.0f64) {
            let psi = Array2::from_shape_vec((m, n), p).unwrap();
            let la = Array1::from(a);
            let lb = Array1::from_iter((0..n).map(|k| b.get(k).copied().unwrap_or(extra[k % 5])));
            let w = |l: &Array1<f64>, psi: &Array2<f64>| {
                materialize_reduced(&SpectralLayer::reduced(l.clone(), psi.clone()).unwrap()).unwrap().w
            };
            let lhs = w(&(&la * alpha + &lb * beta), &psi);
            let rhs = w(&la, &psi) * alpha + w(&lb, &psi) * beta;
            prop_assert!(lhs.iter().zip(rhs.iter()).all(|(x, y)| (x - y).abs() <= 1e-10));

            let mut e = Array2::zeros((m, n));
            e[[m - 1, n - 1]] = 1.0;
            let lhs = w(&la, &(&psi + &(&e * extra[0])));
            let rhs = w(&la, &psi) + w(&la, &e) * extra[0];
            prop_assert!(lhs.iter().zip(rhs.iter()).all(|(x, y)| (x - y).abs() <= 1e-10));
        }
    }
}
